#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ncps/renderer.hpp"
#include "ncps/scene.hpp"

using namespace ncps;

namespace {

CameraModel camera(int w = 160) { return CameraModel::from_sensor(2.8, 2.3, w, w * 3 / 4); }
LightRig rig() { return LightRig::ring(21.5, -11, 1.0); }
double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace

TEST_CASE("five presets covering the albedo, material and shape axes") {
  CHECK(preset_names().size() == 5);
  for (const std::string& name : preset_names()) {
    const SceneOracle s = make_preset(name, camera(), rig());
    CHECK(s.name == name);
    CHECK(s.visible_fraction() >= 0.8);
  }
  CHECK_THROWS_AS(make_preset("teapot", camera(), rig()), ConfigError);
}

TEST_CASE("plane at 35 mm faces the camera everywhere") {
  SurfaceParams sp;
  sp.z0_mm = 35.0;
  const SceneOracle s = make_scene(camera(), rig(), sp, MaterialParams{}, "plane");
  for (int row = 0; row < 120; row += 7)
    for (int col = 0; col < 160; col += 5) {
      const Vec3d n = s.normal(s.camera.pixel(row, col));
      REQUIRE(n.x == 0.0);
      REQUIRE(n.y == 0.0);
      REQUIRE(n.z == -1.0);
    }
}

TEST_CASE("sphere cap normals: pixel-gradient formula with analytic gradient against the sphere") {
  const SceneOracle s = make_preset("sphere_cap_glossy", camera(), rig());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pu(-79.5, 79.5), pv(-59.5, 59.5);
  for (int i = 0; i < 1000; ++i) {
    const PixelCoord p{pu(rng), pv(rng)};
    REQUIRE(deg(angle_between(s.normal(p), s.geometric_normal(p))) < 0.05);
  }
}

TEST_CASE("pixel-gradient normals agree with geometric normals on every preset") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pu(-79.5, 79.5), pv(-59.5, 59.5);
  for (const std::string& name : preset_names()) {
    const SceneOracle s = make_preset(name, camera(), rig());
    double sum = 0;
    for (int i = 0; i < 1000; ++i) {
      const PixelCoord p{pu(rng), pv(rng)};
      sum += deg(angle_between(s.normal(p), s.geometric_normal(p)));
    }
    CHECK(sum / 1000 < 0.05);
  }
}

TEST_CASE("sinusoidal bumps reach the closed-form slope bound") {
  const SceneOracle s = make_preset("sin_bumps_lambertian", camera(), rig());
  const double bound = s.surface.amplitude_mm * 2 * std::numbers::pi / s.surface.period_px;
  CHECK(s.surface.amplitude_mm == 0.3);
  CHECK(s.surface.period_px == 40.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pu(-79.5, 79.5), pv(-59.5, 59.5);
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const DepthSample d = s.depth({pu(rng), pv(rng)});
    worst = std::max({worst, std::abs(d.dz_du), std::abs(d.dz_dv)});
  }
  CHECK(worst <= bound * (1 + 1e-12));
  CHECK(worst >= 0.999 * bound);
}

TEST_CASE("oracle depth gradients match central differences") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pu(-79.5, 79.5), pv(-59.5, 59.5);
  const double h = 1e-4;
  for (const std::string& name : preset_names()) {
    CAPTURE(name);
    const SceneOracle s = make_preset(name, camera(), rig());
    for (int i = 0; i < 1000; ++i) {
      const PixelCoord p{pu(rng), pv(rng)};
      const DepthSample d = s.depth(p);
      const double fu = (s.depth({p.u + h, p.v}).z - s.depth({p.u - h, p.v}).z) / (2 * h);
      const double fv = (s.depth({p.u, p.v + h}).z - s.depth({p.u, p.v - h}).z) / (2 * h);
      REQUIRE(std::abs(d.dz_du - fu) <= 1e-6 * std::abs(fu) + 1e-9);
      REQUIRE(std::abs(d.dz_dv - fv) <= 1e-6 * std::abs(fv) + 1e-9);
    }
  }
}

TEST_CASE("single-light renders superpose to the full render") {
  const RenderedScene rs = render_scene(make_preset("two_tier_steps_colored_glossy", camera(), rig()));
  Image sum(rs.image.width, rs.image.height, 3);
  for (int c = 0; c < 3; ++c) {
    const Image single = single_light_image(rs.image, c);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += single.data[i];
    for (std::size_t i = 0; i < single.pixel_count(); ++i)
      for (int k = 0; k < 3; ++k)
        if (k != c) REQUIRE(single.at(i, k) == 0.0f);
  }
  CHECK(sum.data == rs.image.data);
}

TEST_CASE("Lambertian plane falloff matches the closed form") {
  const CameraModel cam = camera();
  SurfaceParams sp;
  MaterialParams mp;
  mp.albedo = {0.8, 0.5, 0.3};
  const SceneOracle s = make_scene(cam, rig(), sp, mp, "plane");
  for (int row : {0, 59, 119})
    for (int col : {0, 80, 159}) {
      const PixelCoord p = cam.pixel(row, col);
      const std::array<double, 3> v = render_pixel(
          cam, s.rig, p, [&](const PixelCoord& q) { return s.depth(q); },
          [&](int c, const BrdfFeatures<double>& f) { return s.reflectance(c, f); });
      const Vec3d x{sp.z0_mm * p.u / cam.focal_length_px, sp.z0_mm * p.v / cam.focal_length_px, sp.z0_mm};
      for (int c = 0; c < 3; ++c) {
        const Vec3d l = s.rig[c].position;
        const double dx = l.x - x.x, dy = l.y - x.y, dz = l.z - x.z;
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        const double expect = mp.albedo[std::size_t(c)] * s.rig[c].intensity * (-dz) / (d * d * d);
        REQUIRE(v[std::size_t(c)] == doctest::Approx(expect).epsilon(1e-9));
      }
    }
}

TEST_CASE("glossy highlight sits where theta_h is smallest") {
  const CameraModel cam = camera();
  const SceneOracle glossy = make_preset("sphere_cap_glossy", cam, rig());
  SceneOracle diffuse = glossy;
  diffuse.material.kind = MaterialKind::kLambertian;
  const Image a = render_oracle_image(glossy), b = render_oracle_image(diffuse);
  for (int c = 0; c < 3; ++c) {
    int best_spec = -1, best_theta = -1;
    double spec = -1, theta = 1e9;
    for (int row = 0; row < cam.height; ++row)
      for (int col = 0; col < cam.width; ++col) {
        const std::size_t i = a.index(row, col);
        const double excess = double(a.at(i, c)) - double(b.at(i, c));
        if (excess > spec) spec = excess, best_spec = int(i);
        const PixelCoord p = cam.pixel(row, col);
        const Vec3d x = back_project(cam, p, glossy.depth(p).z);
        const Vec3d h = normalized(normalized(glossy.rig[c].position - x) + normalized(-x));
        const double th = angle_between(h, glossy.normal(p));
        if (th < theta) theta = th, best_theta = int(i);
      }
    const int dr = best_spec / cam.width - best_theta / cam.width, dc = best_spec % cam.width - best_theta % cam.width;
    CAPTURE(c);
    CHECK(std::max(std::abs(dr), std::abs(dc)) <= 1);
  }
}

TEST_CASE("oracle render equals the shared per-pixel renderer") {
  for (const std::string& name : preset_names()) {
    const SceneOracle s = make_preset(name, camera(80), rig());
    const Image img = render_oracle_image(s);
    const Image ref = render_image(
        s.camera, s.rig, [&](const PixelCoord& p) { return s.depth(p); },
        [&](int c, const BrdfFeatures<double>& f) { return s.reflectance(c, f); });
    CHECK(img.data == ref.data);
  }
}

TEST_CASE("exposure maps the 99th percentile to 0.9") {
  const RenderedScene rs = render_scene(make_preset("sin_bumps_lambertian", camera(), rig()));
  std::vector<float> v(rs.image.data);
  std::sort(v.begin(), v.end());
  const float p99 = v[std::size_t(std::floor(0.99 * double(v.size() - 1)))];
  CHECK(p99 == doctest::Approx(0.9).epsilon(1e-6));
  for (int c = 0; c < 3; ++c) CHECK(rs.scene.rig[c].intensity == rs.exposure);
  CHECK_NOTHROW(rs.normals.validate());
}

TEST_CASE("identity mixing without noise is a no-op") {
  const RenderedScene rs = render_scene(make_preset("sphere_cap_colored", camera(80), rig()));
  std::mt19937_64 rng(5);
  const Image out = apply_crosstalk(rs.image, CrosstalkMatrix::identity(), 0.0, rng);
  CHECK(out.data == rs.image.data);
}

TEST_CASE("pure red through the example mixing matrix") {
  const CrosstalkMatrix m = CrosstalkMatrix::uniform(0.7, 0.15);
  const std::array<double, 3> v = m.apply({1, 0, 0});
  CHECK(v[0] == 0.7);
  CHECK(v[1] == 0.15);
  CHECK(v[2] == 0.15);
  Image img(1, 1, 3);
  img.at(0, 0) = 1.0f;
  std::mt19937_64 rng(6);
  const Image out = apply_crosstalk(img, m, 0.0, rng);
  CHECK(out.at(0, 0) == 0.7f);
  CHECK(out.at(0, 1) == 0.15f);
  CHECK(out.at(0, 2) == 0.15f);
}

TEST_CASE("random mixing is undone by the inverse matrix") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> off(0, 0.3), val(0, 1);
  for (int k = 0; k < 100; ++k) {
    CrosstalkMatrix m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m.m[std::size_t(i)][std::size_t(j)] = i == j ? 0.7 + off(rng) : off(rng);
    m.validate();
    const CrosstalkMatrix inv = m.inverse();
    const std::array<double, 3> x{val(rng), val(rng), val(rng)};
    const std::array<double, 3> y = inv.apply(m.apply(x));
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(y[std::size_t(c)] - x[std::size_t(c)]) < 1e-9);
  }
  // Same check through the image path, at float precision.
  const RenderedScene rs = render_scene(make_preset("sphere_cap_colored", camera(80), rig()));
  const CrosstalkMatrix m = CrosstalkMatrix::uniform(1.0, 0.15);
  const Image mixed = apply_crosstalk(rs.image, m, 0.0, rng);
  const CrosstalkMatrix inv = m.inverse();
  for (std::size_t i = 0; i < mixed.pixel_count(); ++i) {
    const std::array<double, 3> y = inv.apply({mixed.at(i, 0), mixed.at(i, 1), mixed.at(i, 2)});
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(y[std::size_t(c)] - rs.image.at(i, c)) < 1e-6);
  }
}

TEST_CASE("mixing matrices must be non-negative and diagonally dominant") {
  CHECK_THROWS_AS(CrosstalkMatrix::uniform(0.5, 0.3), ConfigError);
  CrosstalkMatrix m;
  m.m[0][1] = -0.1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("baseline captures without crosstalk have one channel each") {
  const RenderedScene rs = render_scene(make_preset("sphere_cap_colored", camera(80), rig()));
  std::mt19937_64 rng(8);
  const BaselineCaptures b = make_baseline_captures(rs, CrosstalkMatrix::identity(), 0.0, rng);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < rs.image.pixel_count(); ++i)
      for (int k = 0; k < 3; ++k) {
        if (k == c) REQUIRE(b.observed[std::size_t(c)].at(i, k) == rs.image.at(i, k));
        else REQUIRE(b.observed[std::size_t(c)].at(i, k) == 0.0f);
      }
}

TEST_CASE("baseline off-channel ratio equals the mixing ratio") {
  const RenderedScene rs = render_scene(make_preset("sphere_cap_colored", camera(80), rig()));
  const CrosstalkMatrix m = CrosstalkMatrix::uniform(1.0, 0.15);
  std::mt19937_64 rng(9);
  const BaselineCaptures b = make_baseline_captures(rs, m, 0.0, rng);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < rs.image.pixel_count(); ++i) {
      const Image& o = b.observed[std::size_t(c)];
      if (!(o.at(i, c) > 1e-3f)) continue;
      for (int k = 0; k < 3; ++k)
        if (k != c) REQUIRE(o.at(i, k) / o.at(i, c) == doctest::Approx(0.15).epsilon(1e-5));
    }
}

TEST_CASE("invalid scene parameters are rejected") {
  SurfaceParams sp;
  sp.kind = SurfaceKind::kSinBumps;
  sp.period_px = 0;
  CHECK_THROWS_AS(make_scene(camera(), rig(), sp, MaterialParams{}, "bad"), ConfigError);
  MaterialParams mp;
  mp.albedo = {0.5, -0.1, 0.5};
  CHECK_THROWS_AS(make_scene(camera(), rig(), SurfaceParams{}, mp, "bad"), ConfigError);
  SurfaceParams far;
  far.kind = SurfaceKind::kSphereCap;
  far.sphere_radius_mm = 1.0;  // covers only a few pixels
  CHECK_THROWS_AS(make_scene(camera(), rig(), far, MaterialParams{}, "bad"), ConfigError);
  CHECK(parse_surface_kind("two_tier_steps") == SurfaceKind::kTwoTierSteps);
  CHECK_THROWS_AS(parse_material_kind("velvet"), ConfigError);
}
