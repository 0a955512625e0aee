#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "ncps/brdf.hpp"
#include "ncps/geometry.hpp"
#include "ncps/image.hpp"
#include "ncps/surface.hpp"

namespace ncps {

enum class SurfaceKind { kPlane, kSphereCap, kSinBumps, kTwoTierSteps };
enum class MaterialKind { kLambertian, kGlossy };

std::string to_string(SurfaceKind kind);
std::string to_string(MaterialKind kind);
SurfaceKind parse_surface_kind(const std::string& s);
MaterialKind parse_material_kind(const std::string& s);

/// Analytic surface parameters; lateral quantities are in pixels of the
/// scene's camera, depths in mm.
struct SurfaceParams {
  SurfaceKind kind = SurfaceKind::kPlane;
  double z0_mm = 35.0;  // plane depth, bump/step mean level
  // sphere cap: sphere centered on the optical axis, apex nearest the camera
  double sphere_radius_mm = 40.0;
  double apex_depth_mm = 32.0;
  // sinusoidal bumps: z0 + A sin(2 pi u / P) sin(2 pi v / P)
  double amplitude_mm = 0.3;
  double period_px = 40.0;
  // two-tier steps: smooth step of height H across a line at angle a
  double step_height_mm = 1.0;
  double step_width_px = 3.0;
  double step_angle_deg = 30.0;
  double step_offset_px = 0.0;
};

/// Lambertian albedo per channel plus an optional white half-angle lobe
/// ks * cos(theta_h)^alpha.
struct MaterialParams {
  MaterialKind kind = MaterialKind::kLambertian;
  std::array<double, 3> albedo{0.8, 0.8, 0.8};
  double specular_strength = 0.0;
  double specular_exponent = 1.0;
};

/// Ground-truth scene with closed-form depth, gradient and normals.
struct SceneOracle {
  std::string name;
  CameraModel camera;
  LightRig rig;
  SurfaceParams surface;
  MaterialParams material;

  /// Depth and pixel-space gradient; z = 0 marks a ray that misses the surface.
  DepthSample depth(const PixelCoord& p) const;
  bool hit(const PixelCoord& p) const { return depth(p).z > 0; }

  /// Normal through the perspective depth-gradient formula.
  Vec3d normal(const PixelCoord& p) const;

  /// Normal from the surface geometry itself: the sphere's radial direction,
  /// or the cross product of the back-projected tangents for height fields.
  Vec3d geometric_normal(const PixelCoord& p) const;

  double reflectance(int channel, const BrdfFeatures<double>& f) const;
  double reflectance(int channel, const RusinkiewiczAngles& a) const;

  /// Fraction of pixels hit by the surface and lit by all three lights.
  double visible_fraction() const;

  void validate() const;
};

/// Builds and validates a scene; throws ConfigError on invalid parameters or
/// when fewer than 80% of the pixels see the surface lit by every light.
SceneOracle make_scene(const CameraModel& cam, const LightRig& rig, const SurfaceParams& surface,
                       const MaterialParams& material, std::string name = "custom");

/// Named presets covering white/colored, Lambertian/glossy and
/// flat/curved/rugged. Lateral sizes scale with the camera width relative to
/// 160 pixels so a preset describes the same physical object at any resolution.
SceneOracle make_preset(const std::string& name, const CameraModel& cam, const LightRig& rig);
const std::vector<std::string>& preset_names();

struct RenderedScene {
  SceneOracle scene;  // with light intensities set to the chosen exposure
  Image image;        // 3 channels, linear
  NormalMap normals;  // ground truth
  Image depth;        // 1 channel, mm
  double exposure = 1.0;
};

/// Renders through the shared per-pixel formation model. Light intensities
/// are scaled by one exposure factor chosen so that the 99th-percentile
/// sample equals 0.9.
RenderedScene render_scene(const SceneOracle& scene);

/// Renders with the scene's rig as is, without choosing an exposure.
Image render_oracle_image(const SceneOracle& scene);

/// Image with only light `channel` switched on. Lights map one-to-one onto
/// channels, so this is the full render restricted to that channel.
Image single_light_image(const Image& full, int channel);

/// Global 3x3 mixing, observed = M * ideal per pixel.
struct CrosstalkMatrix {
  std::array<std::array<double, 3>, 3> m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static CrosstalkMatrix identity() { return {}; }
  /// Diagonal d with every off-diagonal entry o.
  static CrosstalkMatrix uniform(double diagonal, double off_diagonal);

  /// Entries non-negative and strictly diagonally dominant per row.
  void validate() const;
  std::array<double, 3> apply(const std::array<double, 3>& v) const;
  CrosstalkMatrix inverse() const;
};

/// observed = M * ideal + N(0, sigma^2), clamped at 0.
Image apply_crosstalk(const Image& img, const CrosstalkMatrix& m, double noise_sigma, std::mt19937_64& rng);

struct BaselineCaptures {
  std::array<Image, 3> observed;  // single-LED captures after crosstalk
  std::array<Image, 3> ideal;     // single-LED renders before mixing
};

/// Three single-LED captures of the scene's rendered image, then mixed.
BaselineCaptures make_baseline_captures(const RenderedScene& rendered, const CrosstalkMatrix& m, double noise_sigma,
                                        std::mt19937_64& rng);

}  // namespace ncps
