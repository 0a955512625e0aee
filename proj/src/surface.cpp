#include "ncps/surface.hpp"

#include <algorithm>
#include <cmath>

#include "ncps/log.hpp"

namespace ncps {

void HashEncodingConfig::validate() const {
  if (levels < 1 || levels > 32) throw ConfigError("hash encoding: levels must be in [1, 32]");
  if (features_per_level < 1 || features_per_level > 16)
    throw ConfigError("hash encoding: features_per_level must be in [1, 16]");
  if (log2_table_size < 4 || log2_table_size > 26)
    throw ConfigError("hash encoding: log2_table_size must be in [4, 26]");
  if (base_resolution < 1) throw ConfigError("hash encoding: base_resolution must be positive");
  if (!(growth_factor >= 1.0)) throw ConfigError("hash encoding: growth_factor must be >= 1");
  if (!(init_range >= 0.0)) throw ConfigError("hash encoding: init_range must be non-negative");
}

template <typename T>
HashEncoding<T>::HashEncoding(const HashEncodingConfig& config, ParamStore<T>& store, const std::string& group)
    : config_(config) {
  config_.validate();
  const std::size_t table_size = std::size_t(1) << config_.log2_table_size;
  for (int l = 0; l < config_.levels; ++l) {
    Level lv;
    lv.resolution = int(std::floor(config_.base_resolution * std::pow(config_.growth_factor, l)));
    const std::size_t vertices = std::size_t(lv.resolution + 1) * std::size_t(lv.resolution + 1);
    lv.dense = vertices <= table_size;
    lv.entries = lv.dense ? vertices : table_size;
    lv.table = store.add(group, "hash.level" + std::to_string(l), {int(lv.entries), config_.features_per_level});
    lv.offset = store.info(lv.table).offset;
    levels_.push_back(lv);
  }
}

template <typename T>
std::size_t HashEncoding<T>::vertex_index(int level, std::uint32_t ix, std::uint32_t iy) const {
  const Level& lv = levels_[std::size_t(level)];
  if (lv.dense) return std::size_t(iy) * std::size_t(lv.resolution + 1) + ix;
  const std::uint32_t h = (ix * 1u) ^ (iy * 2654435761u);
  return std::size_t(h) & (lv.entries - 1);
}

template <typename T>
void HashEncoding<T>::initialize(ParamStore<T>& store, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> dist(-config_.init_range, config_.init_range);
  for (const Level& lv : levels_)
    for (T& x : store.values(lv.table)) x = T(dist(rng));
}

template <typename T>
typename HashEncoding<T>::Corner HashEncoding<T>::corners(int level, std::array<double, 2> p) const {
  const Level& lv = levels_[std::size_t(level)];
  const double res = lv.resolution;
  const double xs = p[0] * res, xt = p[1] * res;
  const int ix = std::clamp(int(std::floor(xs)), 0, lv.resolution - 1);
  const int iy = std::clamp(int(std::floor(xt)), 0, lv.resolution - 1);
  const T fx = T(xs - ix), fy = T(xt - iy);
  const T r = T(res);
  Corner c;
  c.row[0] = vertex_index(level, std::uint32_t(ix), std::uint32_t(iy));
  c.row[1] = vertex_index(level, std::uint32_t(ix + 1), std::uint32_t(iy));
  c.row[2] = vertex_index(level, std::uint32_t(ix), std::uint32_t(iy + 1));
  c.row[3] = vertex_index(level, std::uint32_t(ix + 1), std::uint32_t(iy + 1));
  c.w[0] = (T(1) - fx) * (T(1) - fy);
  c.w[1] = fx * (T(1) - fy);
  c.w[2] = (T(1) - fx) * fy;
  c.w[3] = fx * fy;
  c.ws[0] = -r * (T(1) - fy);
  c.ws[1] = r * (T(1) - fy);
  c.ws[2] = -r * fy;
  c.ws[3] = r * fy;
  c.wt[0] = -r * (T(1) - fx);
  c.wt[1] = -r * fx;
  c.wt[2] = r * (T(1) - fx);
  c.wt[3] = r * fx;
  return c;
}

namespace {

std::array<double, 2> clamp_unit(std::array<double, 2> p) {
  if (p[0] < 0.0 || p[0] > 1.0 || p[1] < 0.0 || p[1] > 1.0 || !std::isfinite(p[0]) || !std::isfinite(p[1])) {
    log::warn("hash encoding: input outside [0,1]^2 clamped");
    for (double& x : p) x = std::isfinite(x) ? std::clamp(x, 0.0, 1.0) : 0.0;
  }
  return p;
}

}  // namespace

template <typename T>
std::vector<T> HashEncoding<T>::encode(const ParamStore<T>& store, std::array<double, 2> p, std::vector<T>* d_ds,
                                       std::vector<T>* d_dt) const {
  p = clamp_unit(p);
  const int nf = config_.features_per_level;
  std::vector<T> out(std::size_t(output_dim()), T(0));
  if (d_ds) d_ds->assign(out.size(), T(0));
  if (d_dt) d_dt->assign(out.size(), T(0));
  for (int l = 0; l < config_.levels; ++l) {
    const Corner c = corners(l, p);
    const T* table = store.values(levels_[std::size_t(l)].table).data();
    for (int k = 0; k < 4; ++k)
      for (int f = 0; f < nf; ++f) {
        const T feat = table[c.row[k] * std::size_t(nf) + std::size_t(f)];
        const std::size_t o = std::size_t(l * nf + f);
        out[o] += c.w[k] * feat;
        if (d_ds) (*d_ds)[o] += c.ws[k] * feat;
        if (d_dt) (*d_dt)[o] += c.wt[k] * feat;
      }
  }
  return out;
}

template <typename T>
void HashEncoding<T>::forward(const ParamStore<T>& store, std::span<const std::array<double, 2>> points,
                              T ds_scale, T dt_scale, Mat<T>& out) const {
  const Eigen::Index n = Eigen::Index(points.size());
  const int nf = config_.features_per_level;
  out.setZero(output_dim(), 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::array<double, 2> p = clamp_unit(points[std::size_t(i)]);
    for (int l = 0; l < config_.levels; ++l) {
      const Corner c = corners(l, p);
      const T* table = store.values(levels_[std::size_t(l)].table).data();
      for (int f = 0; f < nf; ++f) {
        T v = 0, vs = 0, vt = 0;
        for (int k = 0; k < 4; ++k) {
          const T feat = table[c.row[k] * std::size_t(nf) + std::size_t(f)];
          v += c.w[k] * feat;
          vs += c.ws[k] * feat;
          vt += c.wt[k] * feat;
        }
        const Eigen::Index o = l * nf + f;
        out(o, i) = v;
        out(o, n + i) = vs * ds_scale;
        out(o, 2 * n + i) = vt * dt_scale;
      }
    }
  }
}

template <typename T>
void HashEncoding<T>::backward(std::span<const std::array<double, 2>> points, T ds_scale, T dt_scale,
                               const Mat<T>& grad_out, T* grad) const {
  const Eigen::Index n = Eigen::Index(points.size());
  const int nf = config_.features_per_level;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::array<double, 2> p = clamp_unit(points[std::size_t(i)]);
    for (int l = 0; l < config_.levels; ++l) {
      const Corner c = corners(l, p);
      T* table = grad + levels_[std::size_t(l)].offset;
      for (int f = 0; f < nf; ++f) {
        const Eigen::Index o = l * nf + f;
        const T g = grad_out(o, i), gs = grad_out(o, n + i) * ds_scale, gt = grad_out(o, 2 * n + i) * dt_scale;
        for (int k = 0; k < 4; ++k)
          table[c.row[k] * std::size_t(nf) + std::size_t(f)] += c.w[k] * g + c.ws[k] * gs + c.wt[k] * gt;
      }
    }
  }
}

void SirenConfig::validate() const {
  if (hidden.empty()) throw ConfigError("siren: at least one hidden layer is required");
  for (int h : hidden)
    if (h < 1) throw ConfigError("siren: hidden widths must be positive");
  if (!(omega0 > 0)) throw ConfigError("siren: omega0 must be positive");
  if (!(output_scale >= 0)) throw ConfigError("siren: output_scale must be non-negative");
}

template <typename T>
Siren<T>::Siren(const SirenConfig& config, ParamStore<T>& store, const std::string& group, int inputs)
    : config_(config) {
  config_.validate();
  widths_.push_back(inputs);
  for (int h : config_.hidden) widths_.push_back(h);
  widths_.push_back(1);
  for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
    const std::string tag = "siren.layer" + std::to_string(k);
    weights_.push_back(store.add(group, tag + ".weight", {widths_[k + 1], widths_[k]}));
    biases_.push_back(store.add(group, tag + ".bias", {widths_[k + 1]}));
  }
}

template <typename T>
void Siren<T>::initialize(ParamStore<T>& store, std::mt19937_64& rng) const {
  const std::size_t nl = weights_.size();
  for (std::size_t k = 0; k < nl; ++k) {
    const double fan_in = widths_[k];
    double bound = k == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in);
    if (k + 1 == nl) bound *= config_.output_scale;
    std::uniform_real_distribution<double> wdist(-bound, bound);
    for (T& w : store.values(weights_[k])) w = bound > 0 ? T(wdist(rng)) : T(0);
    const double bbound = k + 1 == nl ? 0.0 : 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> bdist(-bbound, bbound);
    for (T& b : store.values(biases_[k])) b = bbound > 0 ? T(bdist(rng)) : T(0);
  }
}

template <typename T>
const Mat<T>& Siren<T>::forward(const ParamStore<T>& store, const Mat<T>& input, Workspace& ws) const {
  const std::size_t nl = weights_.size();
  const Eigen::Index n = input.cols() / 3;
  ws.act.resize(nl + 1);
  ws.cosine.resize(nl);
  ws.pre_tangent.resize(nl);
  ws.act[0] = input;
  for (std::size_t k = 0; k < nl; ++k) {
    const Mat<T> w = ConstMatMap<T>(store.values(weights_[k]).data(), widths_[k + 1], widths_[k]);
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(store.values(biases_[k]).data(), widths_[k + 1]);
    Mat<T>& a = ws.act[k + 1];
    a.noalias() = w * ws.act[k];
    a.leftCols(n).colwise() += b;
    if (k + 1 == nl) break;
    const T om = omega(k);
    a *= om;
    ws.cosine[k] = a.leftCols(n).array().cos().matrix();
    ws.pre_tangent[k] = a.rightCols(2 * n);
    a.leftCols(n) = a.leftCols(n).array().sin().matrix();
    a.middleCols(n, n).array() *= ws.cosine[k].array();
    a.rightCols(n).array() *= ws.cosine[k].array();
  }
  return ws.act[nl];
}

template <typename T>
void Siren<T>::backward(const ParamStore<T>& store, Workspace& ws, const Mat<T>& grad_output, T* grad,
                        Mat<T>& grad_input) const {
  const std::size_t nl = weights_.size();
  const Eigen::Index n = grad_output.cols() / 3;
  Mat<T> g = grad_output;
  for (std::size_t k = nl; k-- > 0;) {
    if (k + 1 < nl) {
      // g holds d loss / d act[k+1]; turn it into d loss / d (W act[k] + b).
      const auto cv = ws.cosine[k].array();
      const auto pu = ws.pre_tangent[k].leftCols(n).array();
      const auto pv = ws.pre_tangent[k].rightCols(n).array();
      const auto s = ws.act[k + 1].leftCols(n).array();
      const T om = omega(k);
      Mat<T> gv = (g.leftCols(n).array() * cv - s * (g.middleCols(n, n).array() * pu + g.rightCols(n).array() * pv))
                      .matrix();
      g.middleCols(n, n).array() *= cv;
      g.rightCols(n).array() *= cv;
      g.leftCols(n) = gv;
      g *= om;
    }
    MatMap<T> gw(grad + store.info(weights_[k]).offset, widths_[k + 1], widths_[k]);
    gw += Mat<T>(g * ws.act[k].transpose());
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(grad + store.info(biases_[k]).offset, widths_[k + 1]);
    gb += Mat<T>(g.leftCols(n).rowwise().sum());
    const Mat<T> w = ConstMatMap<T>(store.values(weights_[k]).data(), widths_[k + 1], widths_[k]);
    ws.scratch.noalias() = w.transpose() * g;
    g.swap(ws.scratch);
  }
  grad_input = std::move(g);
}

void DepthConfig::validate() const {
  if (!(z0_mm > 0)) throw ConfigError("depth: z0_mm must be positive");
  if (!(scale_mm > 0)) throw ConfigError("depth: scale_mm must be positive");
  if (!(min_depth_mm > 0) || !(min_depth_mm < z0_mm))
    throw ConfigError("depth: min_depth_mm must be positive and below z0_mm");
}

template <typename T>
DepthField<T>::DepthField(const CameraModel& cam, const HashEncodingConfig& hash, const SirenConfig& siren,
                          const DepthConfig& depth, ParamStore<T>& store)
    : cam_(cam), encoding_(hash, store, kSurfaceGroup), depth_(depth) {
  cam_.validate();
  depth_.validate();
  siren_ = Siren<T>(siren, store, kSurfaceGroup, encoding_.output_dim());
}

template <typename T>
void DepthField<T>::initialize(ParamStore<T>& store, std::mt19937_64& rng) const {
  encoding_.initialize(store, rng);
  siren_.initialize(store, rng);
}

template <typename T>
std::size_t DepthField<T>::evaluate(const ParamStore<T>& store, std::span<const PixelCoord> pixels, Workspace& ws,
                                    std::vector<T>& z, std::vector<T>& dz_du, std::vector<T>& dz_dv) const {
  const std::size_t n = pixels.size();
  ws.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) ws.points[i] = cam_.to_unit_square(pixels[i]);
  const T ds = T(1.0 / cam_.width), dt = T(1.0 / cam_.height);
  encoding_.forward(store, ws.points, ds, dt, ws.encoded);
  const Mat<T>& raw = siren_.forward(store, ws.encoded, ws.siren);
  z.resize(n);
  dz_du.resize(n);
  dz_dv.resize(n);
  const T z0 = T(depth_.z0_mm), s = T(depth_.scale_mm), floor = T(depth_.min_depth_mm);
  std::size_t clamped = 0;
  const Eigen::Index ni = Eigen::Index(n);
  for (Eigen::Index i = 0; i < ni; ++i) {
    T zi = z0 + s * raw(0, i);
    if (!(zi >= floor)) {
      zi = floor;
      ++clamped;
    }
    z[std::size_t(i)] = zi;
    dz_du[std::size_t(i)] = s * raw(0, ni + i);
    dz_dv[std::size_t(i)] = s * raw(0, 2 * ni + i);
  }
  return clamped;
}

template <typename T>
void DepthField<T>::backward(const ParamStore<T>& store, Workspace& ws, std::span<const T> g_z,
                             std::span<const T> g_du, std::span<const T> g_dv, T* grad) const {
  const Eigen::Index n = Eigen::Index(g_z.size());
  const T s = T(depth_.scale_mm);
  ws.grad_raw.resize(1, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ws.grad_raw(0, i) = s * g_z[std::size_t(i)];
    ws.grad_raw(0, n + i) = s * g_du[std::size_t(i)];
    ws.grad_raw(0, 2 * n + i) = s * g_dv[std::size_t(i)];
  }
  siren_.backward(store, ws.siren, ws.grad_raw, grad, ws.grad_encoded);
  encoding_.backward(ws.points, T(1.0 / cam_.width), T(1.0 / cam_.height), ws.grad_encoded, grad);
}

template <typename T>
DepthSample DepthField<T>::depth(const ParamStore<T>& store, const PixelCoord& p) const {
  Workspace ws;
  std::vector<T> z, du, dv;
  const PixelCoord one[1] = {p};
  evaluate(store, one, ws, z, du, dv);
  return {double(z[0]), double(du[0]), double(dv[0])};
}

template <typename T>
Vec3d DepthField<T>::normal(const ParamStore<T>& store, const PixelCoord& p) const {
  const DepthSample d = depth(store, p);
  return normal_from_depth(cam_, p, d.z, d.dz_du, d.dz_dv);
}

template class HashEncoding<float>;
template class HashEncoding<double>;
template class Siren<float>;
template class Siren<double>;
template class DepthField<float>;
template class DepthField<double>;

}  // namespace ncps
