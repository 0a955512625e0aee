#include "ncps/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ncps/renderer.hpp"

namespace ncps {

std::string to_string(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::kPlane: return "plane";
    case SurfaceKind::kSphereCap: return "sphere_cap";
    case SurfaceKind::kSinBumps: return "sin_bumps";
    case SurfaceKind::kTwoTierSteps: return "two_tier_steps";
  }
  return "?";
}

std::string to_string(MaterialKind kind) { return kind == MaterialKind::kLambertian ? "lambertian" : "glossy"; }

SurfaceKind parse_surface_kind(const std::string& s) {
  for (SurfaceKind k : {SurfaceKind::kPlane, SurfaceKind::kSphereCap, SurfaceKind::kSinBumps, SurfaceKind::kTwoTierSteps})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown surface kind '" + s + "'");
}

MaterialKind parse_material_kind(const std::string& s) {
  if (s == "lambertian") return MaterialKind::kLambertian;
  if (s == "glossy") return MaterialKind::kGlossy;
  throw ConfigError("unknown material kind '" + s + "'");
}

DepthSample SceneOracle::depth(const PixelCoord& p) const {
  const SurfaceParams& s = surface;
  const double f = camera.focal_length_px;
  switch (s.kind) {
    case SurfaceKind::kPlane: return {s.z0_mm, 0.0, 0.0};
    case SurfaceKind::kSphereCap: {
      // Ray t * (u/f, v/f, 1) against the sphere |x - c| = R, c = (0, 0, apex + R).
      const double zc = s.apex_depth_mm + s.sphere_radius_mm;
      const double c2 = zc * zc - s.sphere_radius_mm * s.sphere_radius_mm;
      const double k = 1.0 + (p.u * p.u + p.v * p.v) / (f * f);
      const double disc = zc * zc - k * c2;
      if (!(disc > 0)) return {0.0, 0.0, 0.0};
      const double sq = std::sqrt(disc);
      const double t = (zc - sq) / k;
      const double dt_dk = (c2 / (2.0 * sq) * k - (zc - sq)) / (k * k);
      return {t, dt_dk * 2.0 * p.u / (f * f), dt_dk * 2.0 * p.v / (f * f)};
    }
    case SurfaceKind::kSinBumps: {
      const double w = 2.0 * std::numbers::pi / s.period_px;
      const double su = std::sin(w * p.u), sv = std::sin(w * p.v);
      return {s.z0_mm + s.amplitude_mm * su * sv, s.amplitude_mm * w * std::cos(w * p.u) * sv,
              s.amplitude_mm * w * su * std::cos(w * p.v)};
    }
    case SurfaceKind::kTwoTierSteps: {
      // z = z0 + H/2 - H * sigma(d / w), sigma(x) = (1 + tanh x) / 2, d the signed distance to the step line.
      const double a = s.step_angle_deg * std::numbers::pi / 180.0;
      const double d = (p.u * std::cos(a) + p.v * std::sin(a) - s.step_offset_px) / s.step_width_px;
      const double th = std::tanh(d);
      const double dz_dd = -s.step_height_mm * 0.5 * (1.0 - th * th) / s.step_width_px;
      return {s.z0_mm + 0.5 * s.step_height_mm - s.step_height_mm * 0.5 * (1.0 + th), dz_dd * std::cos(a),
              dz_dd * std::sin(a)};
    }
  }
  return {};
}

Vec3d SceneOracle::normal(const PixelCoord& p) const {
  const DepthSample d = depth(p);
  return normal_from_depth(camera, p, d.z, d.dz_du, d.dz_dv);
}

Vec3d SceneOracle::geometric_normal(const PixelCoord& p) const {
  const DepthSample d = depth(p);
  const double f = camera.focal_length_px;
  if (surface.kind == SurfaceKind::kSphereCap) {
    const Vec3d x = back_project(camera, p, d.z);
    const Vec3d c{0.0, 0.0, surface.apex_depth_mm + surface.sphere_radius_mm};
    Vec3d n = normalized(x - c);
    return n.z < 0 ? n : -n;
  }
  // X(u, v) = (z u / f, z v / f, z)
  const Vec3d xu{(d.dz_du * p.u + d.z) / f, d.dz_du * p.v / f, d.dz_du};
  const Vec3d xv{d.dz_dv * p.u / f, (d.dz_dv * p.v + d.z) / f, d.dz_dv};
  Vec3d n = normalized(cross(xu, xv));
  return n.z < 0 ? n : -n;
}

double SceneOracle::reflectance(int channel, const BrdfFeatures<double>& f) const {
  double r = material.albedo[std::size_t(channel)];
  if (material.kind == MaterialKind::kGlossy) {
    const double cos_h = std::max(f[0], 0.0);
    r += material.specular_strength * std::pow(cos_h, material.specular_exponent);
  }
  return r;
}

double SceneOracle::reflectance(int channel, const RusinkiewiczAngles& a) const {
  return reflectance(channel, brdf_features<double>(a));
}

double SceneOracle::visible_fraction() const {
  std::size_t good = 0;
  for (int row = 0; row < camera.height; ++row)
    for (int col = 0; col < camera.width; ++col) {
      const PixelCoord p = camera.pixel(row, col);
      const DepthSample d = depth(p);
      if (!(d.z > 0)) continue;
      const Vec3d x = back_project(camera, p, d.z);
      const Vec3d n = normal(p);
      if (!(dot(-x, n) > 0)) continue;
      bool lit = true;
      for (int c = 0; c < 3; ++c) lit = lit && dot(light_direction(rig[c].position, x).q, n) > 0;
      good += lit ? 1 : 0;
    }
  return double(good) / double(camera.pixel_count());
}

void SceneOracle::validate() const {
  camera.validate();
  rig.validate();
  const SurfaceParams& s = surface;
  if (!(s.z0_mm > 0)) throw ConfigError("scene: z0_mm must be positive");
  switch (s.kind) {
    case SurfaceKind::kPlane: break;
    case SurfaceKind::kSphereCap:
      if (!(s.sphere_radius_mm > 0) || !(s.apex_depth_mm > 0))
        throw ConfigError("scene: sphere radius and apex depth must be positive");
      break;
    case SurfaceKind::kSinBumps:
      if (!(s.period_px > 0) || !(s.amplitude_mm >= 0) || !(s.amplitude_mm < s.z0_mm))
        throw ConfigError("scene: bumps need a positive period and 0 <= amplitude < z0");
      break;
    case SurfaceKind::kTwoTierSteps:
      if (!(s.step_width_px > 0) || !(std::abs(s.step_height_mm) < s.z0_mm))
        throw ConfigError("scene: steps need a positive width and |height| < z0");
      break;
  }
  for (double a : material.albedo)
    if (!(a >= 0) || !std::isfinite(a)) throw ConfigError("scene: albedo must be non-negative");
  if (material.kind == MaterialKind::kGlossy && (!(material.specular_strength >= 0) || !(material.specular_exponent > 0)))
    throw ConfigError("scene: glossy lobe needs strength >= 0 and exponent > 0");
  const double frac = visible_fraction();
  if (frac < 0.8)
    throw ConfigError("scene: only " + std::to_string(frac * 100.0) + "% of pixels see the surface lit by all lights");
}

SceneOracle make_scene(const CameraModel& cam, const LightRig& rig, const SurfaceParams& surface,
                       const MaterialParams& material, std::string name) {
  SceneOracle s{std::move(name), cam, rig, surface, material};
  s.validate();
  return s;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"plane_lambertian", "sin_bumps_lambertian", "sphere_cap_colored",
                                              "sphere_cap_glossy", "two_tier_steps_colored_glossy"};
  return names;
}

SceneOracle make_preset(const std::string& name, const CameraModel& cam, const LightRig& rig) {
  const double scale = cam.width / 160.0;
  SurfaceParams s;
  MaterialParams m;
  const std::array<double, 3> white{0.8, 0.8, 0.8};
  if (name == "plane_lambertian") {
    s.kind = SurfaceKind::kPlane;
    m.albedo = white;
  } else if (name == "sin_bumps_lambertian") {
    s.kind = SurfaceKind::kSinBumps;
    s.amplitude_mm = 0.3;
    s.period_px = 40.0 * scale;
    m.albedo = white;
  } else if (name == "sphere_cap_colored") {
    s.kind = SurfaceKind::kSphereCap;
    m.albedo = {0.65, 0.38, 0.2};
  } else if (name == "sphere_cap_glossy") {
    s.kind = SurfaceKind::kSphereCap;
    m.kind = MaterialKind::kGlossy;
    m.albedo = {0.6, 0.6, 0.6};
    m.specular_strength = 1.5;
    m.specular_exponent = 60.0;
  } else if (name == "two_tier_steps_colored_glossy") {
    s.kind = SurfaceKind::kTwoTierSteps;
    s.step_height_mm = 1.0;
    s.step_width_px = 3.0 * scale;
    m.kind = MaterialKind::kGlossy;
    m.albedo = {0.2, 0.6, 0.3};
    m.specular_strength = 1.0;
    m.specular_exponent = 40.0;
  } else {
    throw ConfigError("unknown scene preset '" + name + "'");
  }
  return make_scene(cam, rig, s, m, name);
}

namespace {

// Depth sample that stays renderable for rays missing the surface.
struct MissSafe {
  const SceneOracle& scene;
  DepthSample operator()(const PixelCoord& p) const {
    const DepthSample d = scene.depth(p);
    return d.z > 0 ? d : DepthSample{scene.surface.z0_mm, 0.0, 0.0};
  }
};

}  // namespace

Image render_oracle_image(const SceneOracle& scene) {
  Image img = render_image(
      scene.camera, scene.rig, MissSafe{scene},
      [&](int c, const BrdfFeatures<double>& f) { return scene.reflectance(c, f); });
  // Rays that miss the surface carry no valid sample.
  for (int row = 0; row < scene.camera.height; ++row)
    for (int col = 0; col < scene.camera.width; ++col)
      if (!scene.hit(scene.camera.pixel(row, col))) {
        const std::size_t i = img.index(row, col);
        img.mask[i] = 0;
        for (int c = 0; c < 3; ++c) img.at(i, c) = 0.0f;
      }
  return img;
}

RenderedScene render_scene(const SceneOracle& scene) {
  RenderedScene out;
  out.scene = scene;
  for (int c = 0; c < 3; ++c) out.scene.rig[c].intensity = 1.0;

  const Image unit = render_oracle_image(out.scene);
  std::vector<float> samples;
  samples.reserve(unit.data.size());
  for (std::size_t i = 0; i < unit.pixel_count(); ++i)
    if (unit.mask[i])
      for (int c = 0; c < 3; ++c) samples.push_back(unit.at(i, c));
  if (samples.empty()) throw DataError("render_scene: no valid pixels");
  const std::size_t k = std::min(samples.size() - 1, std::size_t(std::floor(0.99 * double(samples.size() - 1))));
  std::nth_element(samples.begin(), samples.begin() + std::ptrdiff_t(k), samples.end());
  const double p99 = samples[k];
  if (!(p99 > 0)) throw DataError("render_scene: image is black");
  out.exposure = 0.9 / p99;
  for (int c = 0; c < 3; ++c) out.scene.rig[c].intensity = out.exposure;
  out.image = render_oracle_image(out.scene);

  const CameraModel& cam = scene.camera;
  out.normals = NormalMap(cam.width, cam.height);
  out.depth = Image(cam.width, cam.height, 1);
  for (int row = 0; row < cam.height; ++row)
    for (int col = 0; col < cam.width; ++col) {
      const std::size_t i = out.image.index(row, col);
      const PixelCoord p = cam.pixel(row, col);
      const DepthSample d = scene.depth(p);
      if (!(d.z > 0)) {
        out.normals.mask[i] = 0;
        out.normals.normals[i] = {0.0, 0.0, -1.0};
        out.depth.mask[i] = 0;
        continue;
      }
      out.normals.normals[i] = scene.normal(p);
      out.depth.at(i, 0) = float(d.z);
    }
  return out;
}

Image single_light_image(const Image& full, int channel) {
  Image out = full;
  for (std::size_t i = 0; i < out.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c)
      if (c != channel) out.at(i, c) = 0.0f;
  return out;
}

CrosstalkMatrix CrosstalkMatrix::uniform(double diagonal, double off_diagonal) {
  CrosstalkMatrix m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m.m[std::size_t(i)][std::size_t(j)] = i == j ? diagonal : off_diagonal;
  m.validate();
  return m;
}

void CrosstalkMatrix::validate() const {
  for (int i = 0; i < 3; ++i) {
    double off = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double v = m[std::size_t(i)][std::size_t(j)];
      if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("crosstalk matrix entries must be finite and >= 0");
      if (i != j) off += v;
    }
    if (!(m[std::size_t(i)][std::size_t(i)] > off)) throw ConfigError("crosstalk matrix must be diagonally dominant");
  }
}

std::array<double, 3> CrosstalkMatrix::apply(const std::array<double, 3>& v) const {
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) out[i] += m[i][j] * v[j];
  return out;
}

CrosstalkMatrix CrosstalkMatrix::inverse() const {
  const auto& a = m;
  const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  if (std::abs(det) < 1e-300) throw DomainError("crosstalk matrix is singular");
  CrosstalkMatrix inv;
  inv.m[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
  inv.m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
  inv.m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
  inv.m[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
  inv.m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
  inv.m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
  inv.m[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
  inv.m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
  inv.m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  return inv;
}

Image apply_crosstalk(const Image& img, const CrosstalkMatrix& m, double noise_sigma, std::mt19937_64& rng) {
  m.validate();
  if (img.channels != 3) throw DataError("apply_crosstalk: expected a 3-channel image");
  Image out = img;
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const std::array<double, 3> ideal{img.at(i, 0), img.at(i, 1), img.at(i, 2)};
    const std::array<double, 3> mixed = m.apply(ideal);
    for (int c = 0; c < 3; ++c) {
      double v = mixed[std::size_t(c)];
      if (noise_sigma > 0) v = std::max(0.0, v + noise(rng));
      out.at(i, c) = float(v);
    }
  }
  return out;
}

BaselineCaptures make_baseline_captures(const RenderedScene& rendered, const CrosstalkMatrix& m, double noise_sigma,
                                        std::mt19937_64& rng) {
  BaselineCaptures b;
  for (int c = 0; c < 3; ++c) {
    b.ideal[std::size_t(c)] = single_light_image(rendered.image, c);
    b.observed[std::size_t(c)] = apply_crosstalk(b.ideal[std::size_t(c)], m, noise_sigma, rng);
  }
  return b;
}

}  // namespace ncps
