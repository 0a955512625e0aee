#pragma once

#include <array>
#include <vector>

#include "ncps/brdf.hpp"
#include "ncps/geometry.hpp"
#include "ncps/image.hpp"
#include "ncps/surface.hpp"

namespace ncps {

/// Everything the formation model needs from geometry for one pixel:
/// per channel the factor phi / |l - x|^2 * max(q.n, 0) and the BRDF features.
template <typename S>
struct ShadingTerms {
  std::array<S, 3> geometry;
  std::array<BrdfFeatures<S>, 3> features;
};

/// Shading terms from depth and its pixel gradient. Channel c uses light c;
/// the view direction is normalize(-x). Works with plain scalars and jets.
template <typename S>
ShadingTerms<S> shading_terms(const CameraModel& cam, const LightRig& rig, const PixelCoord& p, const S& z,
                              const S& dz_du, const S& dz_dv) {
  const Vec3<S> x = back_project(cam, p, z);
  const Vec3<S> n = normal_from_depth(cam, p, z, dz_du, dz_dv);
  const Vec3<S> view = (-x) / norm(x);
  ShadingTerms<S> t;
  for (int c = 0; c < 3; ++c) {
    const LightSource& light = rig[c];
    const LightDirection<S> ld = light_direction(light.position.cast<S>(), x);
    const S cosine = dot(ld.q, n);
    const S lit = value_of(cosine) > 0 ? cosine : S(0);
    t.geometry[std::size_t(c)] = S(light.intensity) * lit / (ld.dist * ld.dist);
    t.features[std::size_t(c)] = brdf_features(ld.q, view, n);
  }
  return t;
}

/// One pixel of the near-light formation model
///   I_c = r_c * phi_c / |l_c - x|^2 * max(q_c . n, 0).
/// `depth(p)` returns a DepthSample; `brdf(channel, features)` returns r_c.
template <typename DepthFn, typename BrdfFn>
std::array<double, 3> render_pixel(const CameraModel& cam, const LightRig& rig, const PixelCoord& p, DepthFn&& depth,
                                   BrdfFn&& brdf) {
  const DepthSample d = depth(p);
  const ShadingTerms<double> t = shading_terms<double>(cam, rig, p, d.z, d.dz_du, d.dz_dv);
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double g = t.geometry[std::size_t(c)];
    out[std::size_t(c)] = g > 0 ? brdf(c, t.features[std::size_t(c)]) * g : 0.0;
  }
  return out;
}

/// Renders a full image through render_pixel.
template <typename DepthFn, typename BrdfFn>
Image render_image(const CameraModel& cam, const LightRig& rig, DepthFn&& depth, BrdfFn&& brdf) {
  Image img(cam.width, cam.height, 3);
  for (int row = 0; row < cam.height; ++row)
    for (int col = 0; col < cam.width; ++col) {
      const std::array<double, 3> v = render_pixel(cam, rig, cam.pixel(row, col), depth, brdf);
      const std::size_t i = img.index(row, col);
      for (int c = 0; c < 3; ++c) img.at(i, c) = float(v[std::size_t(c)]);
    }
  return img;
}

struct LossValue {
  double sum = 0.0;
  double mean = 0.0;  // sum / number of valid pixels
  std::size_t pixels = 0;
};

/// Sum over valid pixels of the per-channel absolute differences. Pixels
/// are valid when `mask` is non-zero; an empty mask means all pixels.
LossValue photometric_loss(const Image& captured, const Image& rendered, const std::vector<std::uint8_t>& mask);

/// Validity mask for the loss: the image's own mask, minus pixels whose
/// largest channel is below `threshold` (shadowed, no signal).
std::vector<std::uint8_t> loss_mask(const Image& captured, double threshold);

}  // namespace ncps
