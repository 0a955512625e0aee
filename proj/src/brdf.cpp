#include "ncps/brdf.hpp"

#include <cmath>

namespace ncps {

namespace {

void require_unit(const Vec3d& v, const char* name) {
  if (std::abs(norm(v) - 1.0) > 1e-6) throw DomainError(std::string("rusinkiewicz: ") + name + " is not unit length");
}

// Any unit vector perpendicular to n.
Vec3d perpendicular(const Vec3d& n) {
  const Vec3d axis = std::abs(n.x) < 0.9 ? Vec3d{1, 0, 0} : Vec3d{0, 1, 0};
  return normalized(cross(n, axis));
}

}  // namespace

RusinkiewiczAngles rusinkiewicz(const Vec3d& q, const Vec3d& view, const Vec3d& n) {
  require_unit(q, "light direction");
  require_unit(view, "view direction");
  require_unit(n, "normal");
  const Vec3d sum = q + view;
  if (norm(sum) < 1e-12) throw DegenerateError("rusinkiewicz: half vector undefined for q = -view");
  if (!(dot(q, n) > 0) || !(dot(view, n) > 0))
    throw DomainError("rusinkiewicz: light and view must be above the surface");
  const Vec3d h = sum / norm(sum);

  RusinkiewiczAngles a;
  const Vec3d nxh = cross(n, h);
  a.theta_h = std::atan2(norm(nxh), dot(n, h));
  a.theta_d = std::atan2(norm(cross(q, h)), dot(q, h));
  const Vec3d ey = norm(nxh) > 1e-12 ? nxh / norm(nxh) : perpendicular(h);
  const Vec3d ex = cross(ey, h);
  double phi = std::atan2(dot(q, ey), dot(q, ex));
  phi = std::fmod(phi, std::numbers::pi);
  if (phi < 0) phi += std::numbers::pi;
  if (phi >= std::numbers::pi) phi = 0.0;
  a.phi_d = phi;
  return a;
}

void BrdfConfig::validate() const {
  if (hidden.empty()) throw ConfigError("brdf: at least one hidden layer is required");
  for (int h : hidden)
    if (h < 1) throw ConfigError("brdf: hidden widths must be positive");
  if (!(c0 > 0) || !std::isfinite(c0)) throw ConfigError("brdf: c0 must be positive");
}

template <typename T>
BrdfField<T>::BrdfField(const BrdfConfig& config, ParamStore<T>& store) : config_(config) {
  config_.validate();
  const int n = config_.shared_channels ? 1 : 3;
  static const char* names[3] = {"brdf.red", "brdf.green", "brdf.blue"};
  for (int b = 0; b < n; ++b)
    branches_.emplace_back(store, kBrdfGroup, config_.shared_channels ? "brdf.shared" : names[b], kBrdfFeatures,
                           config_.hidden, 1, Activation::kTanh);
}

template <typename T>
void BrdfField<T>::initialize(ParamStore<T>& store, std::mt19937_64& rng) const {
  for (const Mlp<T>& m : branches_) m.initialize(store, rng, 0.0);
}

namespace {

template <typename T>
T transform(T y, T c0) {
  const T sp = y > T(20) ? y : std::log1p(std::exp(y));
  return c0 * sp / T(std::numbers::ln2);
}

template <typename T>
T transform_derivative(T y, T c0) {
  return c0 / (T(1) + std::exp(-y)) / T(std::numbers::ln2);
}

}  // namespace

template <typename T>
T BrdfField<T>::channel_reflectance(const ParamStore<T>& store, int channel, const BrdfFeatures<T>& f) const {
  Mat<T> x(kBrdfFeatures, 1);
  for (int i = 0; i < kBrdfFeatures; ++i) x(i, 0) = f[std::size_t(i)];
  MlpWorkspace<T> ws;
  Mat<T> out;
  forward(store, channel, x, ws, out);
  return out(0, 0);
}

template <typename T>
std::array<T, 3> BrdfField<T>::reflectance(const ParamStore<T>& store, const RusinkiewiczAngles& a) const {
  const BrdfFeatures<T> f = brdf_features<T>(a);
  if (config_.shared_channels) return shared_channel_reflectance(store, a);
  return {channel_reflectance(store, 0, f), channel_reflectance(store, 1, f), channel_reflectance(store, 2, f)};
}

template <typename T>
std::array<T, 3> BrdfField<T>::shared_channel_reflectance(const ParamStore<T>& store,
                                                           const RusinkiewiczAngles& a) const {
  const T r = channel_reflectance(store, 0, brdf_features<T>(a));
  return {r, r, r};
}

template <typename T>
void BrdfField<T>::forward(const ParamStore<T>& store, int channel, const Mat<T>& features, MlpWorkspace<T>& ws,
                           Mat<T>& out) const {
  const Mlp<T>& m = branches_[std::size_t(branch_for_channel(channel))];
  m.forward(store, features, ws);
  const T c0 = T(config_.c0);
  out = ws.act.back().unaryExpr([c0](T y) { return transform(y, c0); });
}

template <typename T>
void BrdfField<T>::backward(const ParamStore<T>& store, int channel, MlpWorkspace<T>& ws, const Mat<T>& grad_r,
                            T* grad, Mat<T>& grad_features) const {
  const Mlp<T>& m = branches_[std::size_t(branch_for_channel(channel))];
  const T c0 = T(config_.c0);
  const Mat<T> gy =
      grad_r.cwiseProduct(ws.act.back().unaryExpr([c0](T y) { return transform_derivative(y, c0); }));
  m.backward(store, ws, gy, grad, &grad_features);
}

template class BrdfField<float>;
template class BrdfField<double>;

}  // namespace ncps
