#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ncps/dense.hpp"
#include "ncps/geometry.hpp"
#include "ncps/params.hpp"

namespace ncps {

/// Half-angle coordinates of an isotropic reciprocal BRDF.
/// theta_h, theta_d in [0, pi/2]; phi_d folded into [0, pi).
struct RusinkiewiczAngles {
  double theta_h = 0.0;
  double theta_d = 0.0;
  double phi_d = 0.0;
};

/// Number of network inputs derived from one angle triple:
/// (cos th, sin th, cos td, sin td, cos 2pd, sin 2pd).
inline constexpr int kBrdfFeatures = 6;

template <typename T>
using BrdfFeatures = std::array<T, kBrdfFeatures>;

/// Exact angles for front-facing unit vectors q (to light), view (to camera)
/// and n. Throws DegenerateError when q = -view and DomainError when either
/// direction is below the surface.
RusinkiewiczAngles rusinkiewicz(const Vec3d& q, const Vec3d& view, const Vec3d& n);

/// Network features of a given angle triple. phi_d enters as 2 phi_d so the
/// fold phi_d ~ phi_d + pi is seamless.
template <typename T>
BrdfFeatures<T> brdf_features(const RusinkiewiczAngles& a) {
  return {T(std::cos(a.theta_h)), T(std::sin(a.theta_h)), T(std::cos(a.theta_d)),
          T(std::sin(a.theta_d)), T(std::cos(2 * a.phi_d)), T(std::sin(2 * a.phi_d))};
}

/// The same features computed directly from the vectors with smooth
/// expressions only (no acos / atan2), so that they can be differentiated
/// with jets everywhere except the measure-zero degenerate configurations.
/// Vectors need not be front-facing here.
template <typename S>
BrdfFeatures<S> brdf_features(const Vec3<S>& q, const Vec3<S>& view, const Vec3<S>& n) {
  using std::sqrt;
  const Vec3<S> hs = q + view;
  const Vec3<S> h = hs / norm(hs);
  const S tiny(1e-12);
  // theta_h
  const Vec3<S> nxh = cross(n, h);
  const S sin2_h = squared_norm(nxh);
  const S cos_h = dot(n, h);
  const S sin_h = sqrt(sin2_h + tiny);
  // theta_d
  const S cos_d = dot(q, h);
  const S sin_d = sqrt(squared_norm(cross(q, h)) + tiny);
  // phi_d: azimuth of q about h, measured in the frame whose y axis is
  // n x h (the rotation axis that takes n onto h). Scale of the frame
  // cancels inside the double-angle ratios.
  const Vec3<S> ey = nxh;
  const Vec3<S> ex = cross(ey, h);
  const S a = dot(q, ex);
  const S b = dot(q, ey);
  const S r2 = a * a + b * b + S(1e-24);
  return {cos_h, sin_h, cos_d, sin_d, (a * a - b * b) / r2, S(2) * a * b / r2};
}

struct BrdfConfig {
  std::vector<int> hidden{32, 32, 32};
  /// Output at initialization, and the scale of the non-negative transform.
  double c0 = 0.5;
  bool shared_channels = false;

  void validate() const;
};

/// Per-channel implicit BRDF. Each channel has its own small tanh network
/// (or all channels share one in the ablation mode); the output passes
/// through r = c0 * softplus(y) / ln 2, so r >= 0 and y = 0 gives c0.
template <typename T>
class BrdfField {
 public:
  BrdfField() = default;
  BrdfField(const BrdfConfig& config, ParamStore<T>& store);

  /// Hidden layers Xavier-uniform; output layer zero, so r = c0 everywhere.
  void initialize(ParamStore<T>& store, std::mt19937_64& rng) const;

  const BrdfConfig& config() const { return config_; }
  /// Changes the output scale without touching the parameters.
  void set_c0(double c0) {
    if (!(c0 > 0)) throw ConfigError("brdf: c0 must be positive");
    config_.c0 = c0;
  }
  bool shared() const { return config_.shared_channels; }
  int branch_count() const { return int(branches_.size()); }
  int branch_for_channel(int channel) const { return config_.shared_channels ? 0 : channel; }
  const Mlp<T>& branch(int b) const { return branches_[std::size_t(b)]; }

  /// r = [r_R, r_G, r_B] for one angle triple (both modes).
  std::array<T, 3> reflectance(const ParamStore<T>& store, const RusinkiewiczAngles& a) const;

  /// Shared-branch evaluation: one network output broadcast to all channels.
  std::array<T, 3> shared_channel_reflectance(const ParamStore<T>& store, const RusinkiewiczAngles& a) const;

  /// Reflectance of one channel from precomputed features.
  T channel_reflectance(const ParamStore<T>& store, int channel, const BrdfFeatures<T>& f) const;

  /// Batched: features is 6 x n; returns 1 x n reflectances in `out`.
  void forward(const ParamStore<T>& store, int channel, const Mat<T>& features, MlpWorkspace<T>& ws,
               Mat<T>& out) const;

  /// `grad_r` is d loss / d r (1 x n). Accumulates parameter gradients and
  /// writes d loss / d features (6 x n).
  void backward(const ParamStore<T>& store, int channel, MlpWorkspace<T>& ws, const Mat<T>& grad_r, T* grad,
                Mat<T>& grad_features) const;

 private:
  BrdfConfig config_;
  std::vector<Mlp<T>> branches_;
};

}  // namespace ncps
