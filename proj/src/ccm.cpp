#include "ncps/ccm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ncps/optimizer.hpp"

namespace ncps {

void CcmConfig::validate() const {
  for (int h : hidden)
    if (h < 1) throw ConfigError("ccm: hidden widths must be positive");
  if (iterations < 0) throw ConfigError("ccm: iterations must be non-negative");
  if (!(lr > 0)) throw ConfigError("ccm: lr must be positive");
  if (!(lr_min_fraction >= 0 && lr_min_fraction <= 1)) throw ConfigError("ccm: lr_min_fraction must lie in [0, 1]");
  if (batch_size < 0) throw ConfigError("ccm: batch_size must be non-negative");
  if (!(holdout_fraction > 0 && holdout_fraction < 1)) throw ConfigError("ccm: holdout_fraction must lie in (0, 1)");
}

CrosstalkCorrector::CrosstalkCorrector(const CcmConfig& config) : config_(config) {
  config_.validate();
  linear_weight_ = params_.add(kCcmGroup, "ccm.linear.weight", {3, 3});
  linear_bias_ = params_.add(kCcmGroup, "ccm.linear.bias", {3});
  mlp_ = Mlp<double>(params_, kCcmGroup, "ccm.mlp", 3, config_.hidden, 3, Activation::kTanh);
  params_.freeze();
  std::mt19937_64 rng(config_.seed);
  mlp_.initialize(params_, rng, 0.0);
  std::span<double> a = params_.values(linear_weight_);
  for (int i = 0; i < 3; ++i) a[std::size_t(i * 3 + i)] = 1.0;
}

void CrosstalkCorrector::forward(const Mat<double>& x, Workspace& ws, Mat<double>& out) const {
  const Mat<double> a = ConstMatMap<double>(params_.values(linear_weight_).data(), 3, 3);
  const Eigen::Map<const Eigen::Vector3d> b(params_.values(linear_bias_).data());
  mlp_.forward(params_, x, ws.mlp);
  ws.pre.noalias() = a * x;
  ws.pre.colwise() += b;
  ws.pre += ws.mlp.act.back();
  out = ws.pre.cwiseMax(0.0);
}

void CrosstalkCorrector::backward(Workspace& ws, const Mat<double>& grad_out, double* grad) const {
  const Mat<double> g = (ws.pre.array() > 0.0).select(grad_out, 0.0);
  MatMap<double> ga(grad + params_.info(linear_weight_).offset, 3, 3);
  ga += Mat<double>(g * ws.mlp.act.front().transpose());
  Eigen::Map<Eigen::Vector3d> gb(grad + params_.info(linear_bias_).offset);
  gb += Mat<double>(g.rowwise().sum());
  mlp_.backward(params_, ws.mlp, g, grad, nullptr);
}

std::array<double, 3> CrosstalkCorrector::apply(const std::array<double, 3>& rgb) const {
  Mat<double> x(3, 1), y;
  for (int c = 0; c < 3; ++c) x(c, 0) = rgb[std::size_t(c)];
  Workspace ws;
  forward(x, ws, y);
  return {y(0, 0), y(1, 0), y(2, 0)};
}

namespace {

using Sample = std::pair<int, std::uint32_t>;

void check_pairs(const std::array<Image, 3>& baselines, const std::array<Image, 3>& targets) {
  const Image& ref = baselines[0];
  if (ref.channels != 3) throw DataError("ccm: baseline captures must have 3 channels");
  for (int k = 0; k < 3; ++k) {
    const Image& b = baselines[std::size_t(k)];
    const Image& t = targets[std::size_t(k)];
    if (!b.same_shape(ref) || !t.same_shape(ref))
      throw DataError("ccm: baseline " + std::to_string(k) + " is not aligned with the others (dimension mismatch)");
    b.validate_radiance();
    t.validate_radiance();
    for (std::size_t i = 0; i < t.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c)
        if (c != k && t.at(i, c) != 0.0f)
          throw DataError("ccm: target " + std::to_string(k) + " has energy outside its nominal channel");
  }
}

void gather(const std::array<Image, 3>& images, std::span<const Sample> samples, Mat<double>& out) {
  out.resize(3, Eigen::Index(samples.size()));
  for (std::size_t s = 0; s < samples.size(); ++s)
    for (int c = 0; c < 3; ++c)
      out(c, Eigen::Index(s)) = images[std::size_t(samples[s].first)].at(samples[s].second, c);
}

}  // namespace

CcmReport ccm_residual(const CrosstalkCorrector& corrector, const std::array<Image, 3>& baselines,
                       const std::array<Image, 3>& targets, const std::vector<Sample>& samples) {
  check_pairs(baselines, targets);
  std::vector<Sample> all;
  if (samples.empty()) {
    for (int k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < baselines[0].pixel_count(); ++i) all.emplace_back(k, std::uint32_t(i));
  }
  const std::vector<Sample>& use = samples.empty() ? all : samples;
  Mat<double> x, y, out;
  gather(baselines, use, x);
  gather(targets, use, y);
  CrosstalkCorrector::Workspace ws;
  corrector.forward(x, ws, out);
  CcmReport r;
  r.holdout_samples = use.size();
  for (std::size_t s = 0; s < use.size(); ++s) {
    const int k = use[s].first;
    for (int c = 0; c < 3; ++c) {
      const double v = out(c, Eigen::Index(s));
      if (c == k) {
        const double t = y(c, Eigen::Index(s));
        r.holdout_nominal_energy += t * t;
      } else {
        r.holdout_off_energy += v * v;
      }
    }
  }
  r.holdout_residual_ratio = r.holdout_nominal_energy > 0 ? r.holdout_off_energy / r.holdout_nominal_energy : 0.0;
  return r;
}

CcmTraining train_ccm(const std::array<Image, 3>& baselines, const std::array<Image, 3>& targets,
                      const CcmConfig& config) {
  config.validate();
  check_pairs(baselines, targets);
  CcmTraining result{CrosstalkCorrector(config), {}};
  CrosstalkCorrector& t = result.corrector;

  std::vector<Sample> samples;
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < baselines[0].pixel_count(); ++i) samples.emplace_back(k, std::uint32_t(i));
  std::mt19937_64 rng(config.seed ^ 0x13198a2e03707344ULL);
  std::shuffle(samples.begin(), samples.end(), rng);
  const std::size_t holdout = std::max<std::size_t>(1, std::size_t(double(samples.size()) * config.holdout_fraction));
  if (holdout >= samples.size()) throw DataError("ccm: too few samples to hold out a validation set");
  const std::vector<Sample> held(samples.end() - std::ptrdiff_t(holdout), samples.end());
  samples.resize(samples.size() - holdout);

  const std::size_t batch =
      config.batch_size == 0 ? samples.size() : std::min(samples.size(), std::size_t(config.batch_size));
  Adam<double> adam(t.params().size(), {{0, t.params().size(), config.lr}}, 0.9, 0.999, 1e-8);
  std::vector<double> grad(t.params().size());
  std::vector<double> last_good = t.params().flat();
  CrosstalkCorrector::Workspace ws;
  Mat<double> x, y, out;
  std::size_t cursor = samples.size();
  for (int it = 0; it < config.iterations; ++it) {
    if (cursor + batch > samples.size()) {
      std::shuffle(samples.begin(), samples.end(), rng);
      cursor = 0;
    }
    const std::span<const Sample> b(samples.data() + cursor, batch);
    cursor += batch;
    gather(baselines, b, x);
    gather(targets, b, y);
    t.forward(x, ws, out);
    const Mat<double> e = out - y;
    const double loss = e.cwiseAbs().sum() / double(batch);
    // Subgradient of |e| is 0 at e = 0.
    const Mat<double> g = e.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }) / double(batch);
    std::fill(grad.begin(), grad.end(), 0.0);
    t.backward(ws, g, grad.data());
    if (!std::isfinite(loss) || !std::all_of(grad.begin(), grad.end(), [](double v) { return std::isfinite(v); })) {
      t.params().flat() = last_good;
      throw DivergenceError("ccm training diverged at step " + std::to_string(it) + " (loss " +
                            std::to_string(loss) + ")");
    }
    result.report.loss_history.push_back(loss);
    last_good = t.params().flat();
    adam.step(t.params().flat(), grad, cosine_decay(it, config.iterations, config.lr_min_fraction));
    if (!t.params().all_finite()) {
      t.params().flat() = last_good;
      throw DivergenceError("ccm training produced non-finite parameters at step " + std::to_string(it));
    }
  }

  const CcmReport held_report = ccm_residual(t, baselines, targets, held);
  result.report.train_samples = samples.size();
  result.report.holdout_samples = held_report.holdout_samples;
  result.report.holdout_off_energy = held_report.holdout_off_energy;
  result.report.holdout_nominal_energy = held_report.holdout_nominal_energy;
  result.report.holdout_residual_ratio = held_report.holdout_residual_ratio;
  return result;
}

Image apply_ccm(const CrosstalkCorrector& corrector, const Image& img) {
  if (img.channels != 3) throw DataError("apply_ccm: image must have 3 channels");
  Image out = img;
  constexpr std::size_t kChunk = 8192;
  CrosstalkCorrector::Workspace ws;
  Mat<double> x, y;
  for (std::size_t begin = 0; begin < img.pixel_count(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, img.pixel_count() - begin);
    x.resize(3, Eigen::Index(n));
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) x(c, Eigen::Index(i)) = img.at(begin + i, c);
    corrector.forward(x, ws, y);
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) out.at(begin + i, c) = float(y(c, Eigen::Index(i)));
  }
  return out;
}

}  // namespace ncps
