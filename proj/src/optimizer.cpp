#include "ncps/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "ncps/jet.hpp"
#include "ncps/log.hpp"
#include "ncps/parallel.hpp"
#include "ncps/renderer.hpp"

namespace ncps {

void ModelConfig::validate() const {
  hash.validate();
  siren.validate();
  depth.validate();
  brdf.validate();
}

void OptimizerConfig::validate() const {
  if (iterations < 1) throw ConfigError("optimizer: iterations must be at least 1");
  if (!(lr_surface > 0) || !(lr_brdf > 0)) throw ConfigError("optimizer: learning rates must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ConfigError("optimizer: Adam betas must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("optimizer: epsilon must be positive");
  if (!(lr_min_fraction >= 0 && lr_min_fraction <= 1))
    throw ConfigError("optimizer: lr_min_fraction must lie in [0, 1]");
  if (batch_size < 0) throw ConfigError("optimizer: batch_size must be non-negative");
  if (threads < 0) throw ConfigError("optimizer: threads must be non-negative");
  if (chunk_size < 1) throw ConfigError("optimizer: chunk_size must be positive");
  if (early_stop_window < 1) throw ConfigError("optimizer: early_stop_window must be positive");
  if (!(early_stop_tolerance >= 0)) throw ConfigError("optimizer: early_stop_tolerance must be non-negative");
  if (!(shadow_threshold >= 0)) throw ConfigError("optimizer: shadow_threshold must be non-negative");
  if (!(smoothness_weight >= 0)) throw ConfigError("optimizer: smoothness_weight must be non-negative");
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
ReconstructionModel<T> ReconstructionModel<T>::create(const CameraModel& cam, const LightRig& rig,
                                                      const ModelConfig& config, const AblationConfig& ablation,
                                                      std::uint64_t seed) {
  config.validate();
  cam.validate();
  rig.validate();
  ReconstructionModel m;
  m.camera = cam;
  m.rig = rig;
  m.config = config;
  m.ablation = ablation;
  m.config.brdf.shared_channels = config.brdf.shared_channels || ablation.shared_channels;
  m.ablation.shared_channels = m.config.brdf.shared_channels;
  m.depth = DepthField<T>(cam, config.hash, config.siren, config.depth, m.params);
  m.brdf = BrdfField<T>(m.config.brdf, m.params);
  m.params.freeze();
  std::mt19937_64 rng(seed);
  m.depth.initialize(m.params, rng);
  m.brdf.initialize(m.params, rng);
  return m;
}

template <typename T>
double ReconstructionModel<T>::reflectance(int channel, const BrdfFeatures<double>& f) const {
  if (ablation.no_brdf) return albedo[std::size_t(channel)];
  BrdfFeatures<T> ft;
  for (int k = 0; k < kBrdfFeatures; ++k) ft[std::size_t(k)] = T(f[std::size_t(k)]);
  return double(brdf.channel_reflectance(params, channel, ft));
}

template <typename T>
template <typename U>
ReconstructionModel<U> ReconstructionModel<T>::cast() const {
  ReconstructionModel<U> m;
  m.camera = camera;
  m.rig = rig;
  m.config = config;
  m.ablation = ablation;
  m.albedo = albedo;
  m.depth = DepthField<U>(camera, config.hash, config.siren, config.depth, m.params);
  m.brdf = BrdfField<U>(config.brdf, m.params);
  m.params.freeze();
  if (m.params.size() != params.size()) throw DataError("model cast: parameter layout mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) m.params.flat()[i] = U(params.flat()[i]);
  return m;
}

template struct ReconstructionModel<float>;
template struct ReconstructionModel<double>;
template ReconstructionModel<double> ReconstructionModel<float>::cast<double>() const;
template ReconstructionModel<float> ReconstructionModel<double>::cast<float>() const;
template ReconstructionModel<float> ReconstructionModel<float>::cast<float>() const;
template ReconstructionModel<double> ReconstructionModel<double>::cast<double>() const;

// ---------------------------------------------------------------------------
// Objective

namespace {

using GeoJet = Jet<double, 3>;

// Derivative layout per pixel: 3 channels x (1 geometry factor + 6 features) x 3 inputs.
constexpr int kTermsPerChannel = 1 + kBrdfFeatures;
constexpr int kPixelStride = 3 * kTermsPerChannel * 3;

inline std::size_t term_index(std::size_t pixel, int channel, int term) {
  return (pixel * 3 + std::size_t(channel)) * kTermsPerChannel + std::size_t(term);
}

}  // namespace

template <typename T>
struct PhotometricObjective<T>::Worker {
  std::vector<PixelCoord> coords;
  typename DepthField<T>::Workspace depth_ws;
  std::vector<T> z, du, dv;
  std::vector<std::uint8_t> ok;
  std::vector<double> g;        // 3n geometry factors, pixel-major
  std::vector<double> jac;      // n * kPixelStride derivatives w.r.t. (z, du, dv)
  std::array<Mat<T>, 3> features;
  std::array<MlpWorkspace<T>, 3> mlp;
  std::array<Mat<T>, 3> r;
  Mat<T> grad_r, grad_features;
  std::vector<double> adj_g;    // dL/dg per pixel and channel
  std::vector<T> gz, gu, gv;
};

template <typename T>
PhotometricObjective<T>::PhotometricObjective(const ReconstructionModel<T>& model, const Image& captured,
                                              std::vector<std::uint8_t> mask, const OptimizerConfig& config)
    : captured_(captured), mask_(std::move(mask)), config_(config) {
  config_.validate();
  if (captured.channels != 3) throw DataError("objective: captured image must have 3 channels");
  if (captured.width != model.camera.width || captured.height != model.camera.height)
    throw DataError("objective: image size " + std::to_string(captured.width) + "x" +
                    std::to_string(captured.height) + " does not match the camera " +
                    std::to_string(model.camera.width) + "x" + std::to_string(model.camera.height));
  captured.validate_radiance();
  if (mask_.empty()) mask_ = loss_mask(captured, config_.shadow_threshold);
  if (mask_.size() != captured.pixel_count()) throw DataError("objective: mask size does not match the image");
}

template <typename T>
PhotometricObjective<T>::~PhotometricObjective() = default;

template <typename T>
std::vector<std::uint32_t> PhotometricObjective<T>::valid_pixels() const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i]) out.push_back(std::uint32_t(i));
  return out;
}

template <typename T>
void PhotometricObjective<T>::run_chunk(const ReconstructionModel<T>& model, Worker& w,
                                        std::span<const std::uint32_t> pixels, Mode mode, T* grad,
                                        ChunkResult& out) const {
  const std::size_t n = pixels.size();
  const Eigen::Index ni = Eigen::Index(n);
  const CameraModel& cam = model.camera;
  w.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int row = int(pixels[i] / std::uint32_t(cam.width));
    const int col = int(pixels[i] % std::uint32_t(cam.width));
    w.coords[i] = cam.pixel(row, col);
  }
  out.stats.depth_clamps = model.depth.evaluate(model.params, w.coords, w.depth_ws, w.z, w.du, w.dv);

  const bool need_jac = mode == Mode::kGradient;
  w.ok.assign(n, 1);
  w.g.assign(3 * n, 0.0);
  if (need_jac) w.jac.assign(n * kPixelStride, 0.0);
  for (int c = 0; c < 3; ++c) w.features[std::size_t(c)].setZero(kBrdfFeatures, ni);

  for (std::size_t i = 0; i < n; ++i) {
    try {
      const ShadingTerms<GeoJet> t =
          shading_terms<GeoJet>(cam, model.rig, w.coords[i], GeoJet(double(w.z[i]), 0), GeoJet(double(w.du[i]), 1),
                                GeoJet(double(w.dv[i]), 2));
      for (int c = 0; c < 3; ++c) {
        const std::size_t cs = std::size_t(c);
        w.g[3 * i + cs] = t.geometry[cs].a;
        for (int k = 0; k < kBrdfFeatures; ++k)
          w.features[cs](k, Eigen::Index(i)) = T(t.features[cs][std::size_t(k)].a);
        if (!need_jac) continue;
        double* jg = &w.jac[term_index(i, c, 0) * 3];
        for (int j = 0; j < 3; ++j) jg[j] = t.geometry[cs].v[std::size_t(j)];
        for (int k = 0; k < kBrdfFeatures; ++k) {
          double* jf = &w.jac[term_index(i, c, 1 + k) * 3];
          for (int j = 0; j < 3; ++j) jf[j] = t.features[cs][std::size_t(k)].v[std::size_t(j)];
        }
      }
    } catch (const Error&) {
      // Degenerate geometry at this pixel (zero-length normal): it drops out of the loss.
      w.ok[i] = 0;
    }
  }

  for (std::size_t i = 0; i < n; ++i) out.stats.pixels += w.ok[i];

  if (mode == Mode::kAlbedo) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!w.ok[i]) continue;
      for (int c = 0; c < 3; ++c) {
        const double g = w.g[3 * i + std::size_t(c)];
        out.ig[std::size_t(c)] += double(captured_.at(pixels[i], c)) * g;
        out.gg[std::size_t(c)] += g * g;
      }
    }
    return;
  }

  const bool neural = !model.ablation.no_brdf;
  if (neural)
    for (int c = 0; c < 3; ++c)
      model.brdf.forward(model.params, c, w.features[std::size_t(c)], w.mlp[std::size_t(c)],
                         w.r[std::size_t(c)]);

  // L1 residuals and their sign adjoints (subgradient 0 at 0).
  w.adj_g.assign(3 * n, 0.0);
  if (need_jac && neural) w.grad_r.setZero(3, ni);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!w.ok[i]) continue;
    for (int c = 0; c < 3; ++c) {
      const std::size_t cs = std::size_t(c);
      const double r = neural ? double(w.r[cs](0, Eigen::Index(i))) : model.albedo[cs];
      const double g = w.g[3 * i + cs];
      const double e = r * g - double(captured_.at(pixels[i], c));
      l1 += std::abs(e);
      if (!need_jac) continue;
      const double s = e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0);
      w.adj_g[3 * i + cs] = s * r;
      if (neural) w.grad_r(c, Eigen::Index(i)) = T(s * g);
    }
  }
  out.stats.l1 = l1;
  out.stats.loss = l1;

  const double smooth = config_.smoothness_weight;
  if (smooth > 0)
    for (std::size_t i = 0; i < n; ++i)
      if (w.ok[i]) out.stats.loss += smooth * (double(w.du[i]) * w.du[i] + double(w.dv[i]) * w.dv[i]);

  if (!need_jac) return;

  std::vector<double> acc(3 * n, 0.0);  // dL/d(z, du, dv) per pixel
  if (neural) {
    for (int c = 0; c < 3; ++c) {
      const std::size_t cs = std::size_t(c);
      const Mat<T> gr = w.grad_r.row(c);
      model.brdf.backward(model.params, c, w.mlp[cs], gr, grad, w.grad_features);
      for (std::size_t i = 0; i < n; ++i) {
        if (!w.ok[i]) continue;
        for (int k = 0; k < kBrdfFeatures; ++k) {
          const double gf = double(w.grad_features(k, Eigen::Index(i)));
          if (gf == 0.0) continue;
          const double* jf = &w.jac[term_index(i, c, 1 + k) * 3];
          for (int j = 0; j < 3; ++j) acc[3 * i + std::size_t(j)] += gf * jf[j];
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!w.ok[i]) continue;
    for (int c = 0; c < 3; ++c) {
      const double a = w.adj_g[3 * i + std::size_t(c)];
      const double* jg = &w.jac[term_index(i, c, 0) * 3];
      for (int j = 0; j < 3; ++j) acc[3 * i + std::size_t(j)] += a * jg[j];
    }
  }
  w.gz.resize(n);
  w.gu.resize(n);
  w.gv.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double gu = acc[3 * i + 1], gv = acc[3 * i + 2];
    if (smooth > 0 && w.ok[i]) {
      gu += 2.0 * smooth * double(w.du[i]);
      gv += 2.0 * smooth * double(w.dv[i]);
    }
    w.gz[i] = T(acc[3 * i]);
    w.gu[i] = T(gu);
    w.gv[i] = T(gv);
  }
  model.depth.backward(model.params, w.depth_ws, w.gz, w.gu, w.gv, grad);
}

template <typename T>
std::vector<typename PhotometricObjective<T>::ChunkResult> PhotometricObjective<T>::run(
    const ReconstructionModel<T>& model, std::span<const std::uint32_t> pixels, Mode mode, std::vector<T>* grad) {
  const std::size_t cs = std::size_t(config_.chunk_size);
  const std::size_t chunks = (pixels.size() + cs - 1) / cs;
  const int threads = std::max(1, std::min<int>(resolve_threads(config_.threads), int(chunks)));
  while (int(workers_.size()) < threads) workers_.push_back(std::make_unique<Worker>());
  const bool with_grad = mode == Mode::kGradient;
  const std::size_t params = model.params.size();
  if (with_grad && buffers_.size() < chunks) buffers_.resize(chunks);

  std::vector<ChunkResult> results(chunks);
  parallel_for(chunks, threads, [&](std::size_t k, int worker) {
    const std::size_t begin = k * cs, end = std::min(pixels.size(), begin + cs);
    T* g = nullptr;
    if (with_grad) {
      buffers_[k].assign(params, T(0));
      g = buffers_[k].data();
    }
    run_chunk(model, *workers_[std::size_t(worker)], pixels.subspan(begin, end - begin), mode, g, results[k]);
  });

  if (with_grad) {
    grad->assign(params, T(0));
    // Chunk order, independent of which worker ran which chunk.
    for (std::size_t k = 0; k < chunks; ++k)
      for (std::size_t j = 0; j < params; ++j) (*grad)[j] += buffers_[k][j];
  }
  return results;
}

template <typename T>
ObjectiveStats PhotometricObjective<T>::evaluate(const ReconstructionModel<T>& model,
                                                 std::span<const std::uint32_t> pixels, std::vector<T>* grad) {
  const std::vector<ChunkResult> results = run(model, pixels, grad ? Mode::kGradient : Mode::kLoss, grad);
  ObjectiveStats s;
  for (const ChunkResult& r : results) {
    s.loss += r.stats.loss;
    s.l1 += r.stats.l1;
    s.pixels += r.stats.pixels;
    s.depth_clamps += r.stats.depth_clamps;
  }
  return s;
}

template <typename T>
std::array<double, 3> PhotometricObjective<T>::least_squares_albedo(const ReconstructionModel<T>& model,
                                                                    std::span<const std::uint32_t> pixels) {
  const std::vector<ChunkResult> results = run(model, pixels, Mode::kAlbedo, nullptr);
  std::array<double, 3> ig{}, gg{}, rho{};
  for (const ChunkResult& r : results)
    for (int c = 0; c < 3; ++c) {
      ig[std::size_t(c)] += r.ig[std::size_t(c)];
      gg[std::size_t(c)] += r.gg[std::size_t(c)];
    }
  for (int c = 0; c < 3; ++c) {
    const std::size_t cs = std::size_t(c);
    if (!(gg[cs] > 0) || !std::isfinite(ig[cs] / gg[cs])) {
      log::warn("albedo: channel " + std::to_string(c) + " receives no light; albedo set to 1");
      rho[cs] = 1.0;
    } else {
      rho[cs] = ig[cs] / gg[cs];
    }
  }
  return rho;
}

template class PhotometricObjective<float>;
template class PhotometricObjective<double>;

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(std::size_t parameters, std::vector<Group> groups, double beta1, double beta2, double epsilon)
    : groups_(std::move(groups)), b1_(beta1), b2_(beta2), eps_(epsilon), m_(parameters, T(0)),
      v_(parameters, T(0)) {
  for (const Group& g : groups_)
    if (g.offset + g.size > parameters) throw ConfigError("adam: group exceeds the parameter count");
}

template <typename T>
void Adam<T>::step(std::vector<T>& params, const std::vector<T>& grad, double lr_scale) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw DataError("adam: parameter or gradient size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, double(t_));
  const double c2 = 1.0 - std::pow(b2_, double(t_));
  for (const Group& g : groups_) {
    const double lr = g.lr * lr_scale;
    for (std::size_t i = g.offset; i < g.offset + g.size; ++i) {
      const double gi = double(grad[i]);
      const double m = b1_ * double(m_[i]) + (1 - b1_) * gi;
      const double v = b2_ * double(v_[i]) + (1 - b2_) * gi * gi;
      m_[i] = T(m);
      v_[i] = T(v);
      params[i] = T(double(params[i]) - lr * (m / c1) / (std::sqrt(v / c2) + eps_));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

double cosine_decay(int iteration, int total, double min_fraction) {
  if (total <= 1) return 1.0;
  const double t = std::clamp(double(iteration) / double(total - 1), 0.0, 1.0);
  return min_fraction + (1.0 - min_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// ---------------------------------------------------------------------------
// Optimization loop

namespace {

// Random batches walk a shuffled permutation of the valid pixels; a new
// permutation (one epoch) starts when the current one cannot fill a batch.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::uint32_t> valid, std::size_t batch, std::uint64_t seed)
      : perm_(std::move(valid)), batch_(batch), rng_(seed ^ 0x243f6a8885a308d3ULL) {
    full_ = batch_ == 0 || batch_ >= perm_.size();
    if (!full_) std::sort(perm_.begin(), perm_.end());
  }

  bool full() const { return full_; }

  /// Next batch; sets `new_epoch` when a fresh permutation was started.
  std::span<const std::uint32_t> next(bool& new_epoch) {
    if (full_) {
      new_epoch = true;
      return perm_;
    }
    new_epoch = false;
    if (cursor_ == 0 || cursor_ + batch_ > perm_.size()) {
      std::shuffle(perm_.begin(), perm_.end(), rng_);
      cursor_ = 0;
      new_epoch = true;
    }
    std::span<const std::uint32_t> out(perm_.data() + cursor_, batch_);
    cursor_ += batch_;
    return out;
  }

 private:
  std::vector<std::uint32_t> perm_;
  std::size_t batch_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
  bool full_ = false;
};

bool all_finite(const std::vector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

// Average of mean_l1 over history[begin, end).
double window_mean(const std::vector<HistoryEntry>& h, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += h[i].mean_l1;
  return s / double(end - begin);
}

OptimizeResult run_optimization(const Image& captured, const CameraModel& cam, const LightRig& rig,
                                const ModelConfig& model_config, const AblationConfig& ablation,
                                const OptimizerConfig& config, const OptimizeHooks& hooks) {
  config.validate();
  model_config.validate();
  using Clock = std::chrono::steady_clock;
  const Clock::time_point start = Clock::now();

  OptimizeResult result{ReconstructionModel<float>::create(cam, rig, model_config, ablation, config.seed), {}, 0, 0,
                        false};
  ReconstructionModel<float>& model = result.model;
  PhotometricObjective<float> objective(model, captured, {}, config);
  const std::vector<std::uint32_t> valid = objective.valid_pixels();
  if (valid.empty()) throw DataError("optimize: no pixel passes the shadow threshold");

  if (ablation.no_brdf) {
    model.albedo = objective.least_squares_albedo(model, valid);
  } else if (model_config.auto_c0) {
    const std::array<double, 3> rho = objective.least_squares_albedo(model, valid);
    const double c0 = (rho[0] + rho[1] + rho[2]) / 3.0;
    if (c0 > 0 && std::isfinite(c0)) {
      model.brdf.set_c0(c0);
      model.config.brdf.c0 = c0;
      // Independent branches also start at their own channel's albedo, so the
      // initial chromaticity is not explained away by the geometry.
      if (!model.brdf.shared())
        for (int c = 0; c < 3; ++c) {
          const double ratio = rho[std::size_t(c)] / c0;
          if (!(ratio > 0) || !std::isfinite(ratio)) continue;
          const Mlp<float>& mlp = model.brdf.branch(c);
          const double y = std::log(std::expm1(ratio * std::numbers::ln2));
          model.params.values(mlp.bias_id(mlp.layers() - 1))[0] = float(y);
        }
    }
  }

  const std::size_t surface = model.params.group_size(kSurfaceGroup);
  const std::size_t brdf = model.params.group_size(kBrdfGroup);
  Adam<float> adam(model.params.size(),
                   {{0, surface, config.lr_surface}, {surface, brdf, config.lr_brdf}}, config.beta1, config.beta2,
                   config.epsilon);
  std::size_t batch = std::size_t(config.batch_size);
  if (batch == 0 && valid.size() > OptimizerConfig::kFullBatchLimit) batch = OptimizerConfig::kAutoBatch;
  BatchSampler sampler(valid, batch, config.seed);

  std::vector<float> grad, last_good;
  const auto diverge = [&](int it, const std::string& what) {
    ReconstructionModel<float> good = model;
    if (!last_good.empty()) good.params.flat() = last_good;
    if (hooks.on_divergence) hooks.on_divergence(good, result.history);
    throw DivergenceError("optimization diverged at iteration " + std::to_string(it) + ": " + what);
  };

  const std::size_t window = std::size_t(config.early_stop_window);
  for (int it = 0; it < config.iterations; ++it) {
    bool new_epoch = false;
    const std::span<const std::uint32_t> batch = sampler.next(new_epoch);
    if (ablation.no_brdf && new_epoch && it > 0) model.albedo = objective.least_squares_albedo(model, valid);

    const ObjectiveStats stats = objective.evaluate(model, batch, &grad);
    result.depth_clamps += stats.depth_clamps;
    if (!std::isfinite(stats.loss)) diverge(it, "non-finite loss");
    if (!all_finite(grad)) diverge(it, "non-finite gradient");

    HistoryEntry entry;
    entry.iteration = it;
    entry.sum_l1 = stats.l1;
    entry.mean_l1 = stats.pixels ? stats.l1 / double(stats.pixels) : 0.0;
    entry.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
    result.history.push_back(entry);
    if (hooks.on_iteration) hooks.on_iteration(entry);

    last_good = model.params.flat();
    adam.step(model.params.flat(), grad, cosine_decay(it, config.iterations, config.lr_min_fraction));
    if (!model.params.all_finite()) diverge(it, "non-finite parameter after update");
    result.iterations_run = it + 1;

    const std::size_t h = result.history.size();
    if (h >= 2 * window) {
      const double previous = window_mean(result.history, h - 2 * window, h - window);
      const double recent = window_mean(result.history, h - window, h);
      if (previous - recent < config.early_stop_tolerance) {
        result.stopped_early = true;
        log::info("optimize: stopped early at iteration " + std::to_string(it));
        break;
      }
    }
  }
  if (ablation.no_brdf) model.albedo = objective.least_squares_albedo(model, valid);
  if (result.depth_clamps > 0)
    log::warn("optimize: " + std::to_string(result.depth_clamps) + " depth samples were raised to the floor");
  return result;
}

}  // namespace

OptimizeResult optimize(const Image& captured, const CameraModel& cam, const LightRig& rig,
                        const ModelConfig& model_config, const AblationConfig& ablation,
                        const OptimizerConfig& config, const OptimizeHooks& hooks) {
  return run_optimization(captured, cam, rig, model_config, ablation, config, hooks);
}

OptimizeResult ablate_no_brdf(const Image& captured, const CameraModel& cam, const LightRig& rig,
                              const ModelConfig& model_config, const OptimizerConfig& config,
                              const OptimizeHooks& hooks) {
  AblationConfig ablation;
  ablation.no_brdf = true;
  return run_optimization(captured, cam, rig, model_config, ablation, config, hooks);
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

constexpr std::size_t kPredictChunk = 4096;

// Calls fn(pixel index, coord, z, du, dv) for every pixel, in chunks.
template <typename Fn>
void for_each_depth(const ReconstructionModel<float>& model, Fn&& fn) {
  const CameraModel& cam = model.camera;
  const std::size_t total = cam.pixel_count();
  typename DepthField<float>::Workspace ws;
  std::vector<PixelCoord> coords;
  std::vector<float> z, du, dv;
  for (std::size_t begin = 0; begin < total; begin += kPredictChunk) {
    const std::size_t end = std::min(total, begin + kPredictChunk);
    coords.clear();
    for (std::size_t i = begin; i < end; ++i)
      coords.push_back(cam.pixel(int(i / std::size_t(cam.width)), int(i % std::size_t(cam.width))));
    model.depth.evaluate(model.params, coords, ws, z, du, dv);
    for (std::size_t i = begin; i < end; ++i)
      fn(i, coords[i - begin], double(z[i - begin]), double(du[i - begin]), double(dv[i - begin]));
  }
}

}  // namespace

NormalMap predict_normals(const ReconstructionModel<float>& model, const std::vector<std::uint8_t>& mask) {
  const CameraModel& cam = model.camera;
  if (!mask.empty() && mask.size() != cam.pixel_count())
    throw DataError("predict_normals: mask size does not match the camera");
  NormalMap out(cam.width, cam.height);
  if (!mask.empty()) out.mask = mask;
  for_each_depth(model, [&](std::size_t i, const PixelCoord& p, double z, double du, double dv) {
    try {
      out.normals[i] = normal_from_depth(cam, p, z, du, dv);
    } catch (const DegenerateError&) {
      out.normals[i] = {0, 0, -1};
      out.mask[i] = 0;
    }
  });
  return out;
}

Image predict_depth(const ReconstructionModel<float>& model, const std::vector<std::uint8_t>& mask) {
  const CameraModel& cam = model.camera;
  if (!mask.empty() && mask.size() != cam.pixel_count())
    throw DataError("predict_depth: mask size does not match the camera");
  Image out(cam.width, cam.height, 1);
  if (!mask.empty()) out.mask = mask;
  for_each_depth(model, [&](std::size_t i, const PixelCoord&, double z, double, double) { out.at(i, 0) = float(z); });
  return out;
}

Image render_model(const ReconstructionModel<float>& model) {
  const CameraModel& cam = model.camera;
  const std::size_t total = cam.pixel_count();
  Image out(cam.width, cam.height, 3);
  std::vector<std::array<double, 3>> geometry(total);
  std::array<Mat<float>, 3> features;
  for (auto& f : features) f.setZero(kBrdfFeatures, Eigen::Index(total));
  for_each_depth(model, [&](std::size_t i, const PixelCoord& p, double z, double du, double dv) {
    try {
      const ShadingTerms<double> t = shading_terms<double>(cam, model.rig, p, z, du, dv);
      for (int c = 0; c < 3; ++c) {
        geometry[i][std::size_t(c)] = t.geometry[std::size_t(c)];
        for (int k = 0; k < kBrdfFeatures; ++k)
          features[std::size_t(c)](k, Eigen::Index(i)) = float(t.features[std::size_t(c)][std::size_t(k)]);
      }
    } catch (const Error&) {
      out.mask[i] = 0;
    }
  });
  MlpWorkspace<float> ws;
  Mat<float> r;
  for (int c = 0; c < 3; ++c) {
    if (!model.ablation.no_brdf) model.brdf.forward(model.params, c, features[std::size_t(c)], ws, r);
    for (std::size_t i = 0; i < total; ++i) {
      const double g = geometry[i][std::size_t(c)];
      const double rc = model.ablation.no_brdf ? model.albedo[std::size_t(c)] : double(r(0, Eigen::Index(i)));
      out.at(i, c) = g > 0 ? float(rc * g) : 0.0f;
    }
  }
  return out;
}

double evaluate_mae(const NormalMap& estimated, const NormalMap& ground_truth, const std::vector<std::uint8_t>& mask) {
  if (estimated.width != ground_truth.width || estimated.height != ground_truth.height)
    throw DataError("evaluate_mae: normal maps differ in size");
  const std::size_t n = estimated.size();
  if (!mask.empty() && mask.size() != n) throw DataError("evaluate_mae: mask size does not match the normal maps");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool valid = (mask.empty() || mask[i]) && (estimated.mask.empty() || estimated.mask[i]) &&
                       (ground_truth.mask.empty() || ground_truth.mask[i]);
    if (!valid) continue;
    const Vec3d& a = estimated.normals[i];
    const Vec3d& b = ground_truth.normals[i];
    sum += std::atan2(norm(cross(a, b)), dot(a, b));
    ++count;
  }
  if (count == 0) throw DataError("evaluate_mae: no valid pixels");
  return sum / double(count) * 180.0 / std::numbers::pi;
}

}  // namespace ncps
