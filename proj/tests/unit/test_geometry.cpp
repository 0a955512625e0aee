#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ncps/geometry.hpp"
#include "ncps/scene.hpp"

using namespace ncps;

namespace {

CameraModel camera(double f = 779.0) {
  CameraModel cam = CameraModel::from_sensor(2.8, 2.3, 640, 480);
  cam.focal_length_px = f;
  return cam;
}

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace

TEST_CASE("focal length in pixels follows the sensor pitch") {
  const CameraModel cam = CameraModel::from_sensor(2.8, 2.3, 640, 480);
  CHECK(cam.focal_length_px == doctest::Approx(2.8 / (2.3 / 640.0)).epsilon(1e-12));
  CHECK(cam.focal_length_px == doctest::Approx(779.13).epsilon(1e-4));
  CHECK(cam.cx == 319.5);
  CHECK(cam.cy == 239.5);
  CHECK_THROWS_AS(CameraModel::from_sensor(2.8, 0.0, 640, 480), ConfigError);
}

TEST_CASE("back_project maps the principal point onto the optical axis") {
  const Vec3d x = back_project(camera(), PixelCoord{0, 0}, 35.0);
  CHECK(x.x == 0.0);
  CHECK(x.y == 0.0);
  CHECK(x.z == 35.0);
}

TEST_CASE("back_project of u = f is a 45 degree ray") {
  const CameraModel cam = camera();
  const Vec3d x = back_project(cam, PixelCoord{cam.focal_length_px, 0}, 10.0);
  CHECK(x.x == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(x.y == 0.0);
  CHECK(x.z == 10.0);
}

TEST_CASE("back_project then project returns the pixel") {
  const CameraModel cam = camera(779.0);
  const PixelCoord p{123.4, -56.7};
  const Vec3d x = back_project(cam, p, 20.0);
  const PixelCoord q = project(cam, x);
  CHECK(std::abs(q.u - p.u) < 1e-9);
  CHECK(std::abs(q.v - p.v) < 1e-9);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pu(-320, 320), pv(-240, 240), pz(1, 100);
  for (int i = 0; i < 1000; ++i) {
    const PixelCoord r{pu(rng), pv(rng)};
    const PixelCoord s = project(cam, back_project(cam, r, pz(rng)));
    REQUIRE(std::abs(s.u - r.u) < 1e-9);
    REQUIRE(std::abs(s.v - r.v) < 1e-9);
  }
}

TEST_CASE("back_project rejects non-positive depth") {
  CHECK_THROWS_AS(back_project(camera(), PixelCoord{1, 2}, 0.0), DomainError);
  CHECK_THROWS_AS(back_project(camera(), PixelCoord{1, 2}, -3.0), DomainError);
}

TEST_CASE("zero depth gradient gives the frontal normal") {
  for (double z : {0.5, 35.0, 400.0}) {
    const Vec3d n = normal_from_depth(camera(), PixelCoord{17, -4}, z, 0.0, 0.0);
    CHECK(n.x == 0.0);
    CHECK(n.y == 0.0);
    CHECK(n.z == -1.0);
  }
}

TEST_CASE("normal of a tilted plane matches the closed form and the swept tangents") {
  const CameraModel cam = camera();
  const double f = cam.focal_length_px, z0 = 35.0, a = 0.01;
  for (double u : {-200.0, 0.0, 150.0}) {
    const PixelCoord p{u, 30.0};
    const Vec3d n = normal_from_depth(cam, p, z0 + a * u, a, 0.0);
    const Vec3d expect = normalized(Vec3d{f * a, 0.0, -z0 - 2.0 * a * u});
    CHECK(angle_between(n, expect) < 1e-12);

    // Tangents of the back-projected plane by central differences.
    const double h = 1e-3;
    const auto X = [&](double du, double dv) {
      const PixelCoord q{p.u + du, p.v + dv};
      return back_project(cam, q, z0 + a * q.u);
    };
    const Vec3d xu = (X(h, 0) - X(-h, 0)) / (2 * h);
    const Vec3d xv = (X(0, h) - X(0, -h)) / (2 * h);
    Vec3d g = normalized(cross(xu, xv));
    if (g.z > 0) g = -g;
    CHECK(deg(angle_between(n, g)) < 1e-6);
  }
}

TEST_CASE("normal_from_depth is a normalization of a scale-free vector") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-0.2, 0.2), pu(-300, 300), pz(5, 80);
  const CameraModel cam = camera();
  for (int i = 0; i < 200; ++i) {
    const PixelCoord p{pu(rng), pu(rng)};
    const double z = pz(rng), gu = d(rng), gv = d(rng);
    const Vec3d n = normal_from_depth(cam, p, z, gu, gv);
    CHECK(std::abs(norm(n) - 1.0) < 1e-12);
    const Vec3d nn = normalized(n);
    CHECK(angle_between(n, nn) < 1e-15);
    // Depth scaling scales the whole pre-normalization vector.
    const Vec3d m = normal_from_depth(cam, p, 3.0 * z, 3.0 * gu, 3.0 * gv);
    CHECK(angle_between(n, m) < 1e-12);
  }
}

TEST_CASE("degenerate pre-normal raises") {
  CHECK_THROWS_AS(normal_from_depth(camera(), PixelCoord{0, 0}, 0.0, 0.0, 0.0), DegenerateError);
}

TEST_CASE("pixel-gradient normals agree with tangent cross products on smooth fields") {
  const CameraModel cam = CameraModel::from_sensor(2.8, 2.3, 160, 120);
  const LightRig rig = LightRig::ring(21.5, -11, 1.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pu(-79.5, 79.5), pv(-59.5, 59.5);
  for (const std::string& name : preset_names()) {
    const SceneOracle s = make_preset(name, cam, rig);
    for (int i = 0; i < 200; ++i) {
      const PixelCoord p{pu(rng), pv(rng)};
      const double h = 1e-4;
      const auto X = [&](double du, double dv) {
        const PixelCoord q{p.u + du, p.v + dv};
        return back_project(cam, q, s.depth(q).z);
      };
      Vec3d g = normalized(cross((X(h, 0) - X(-h, 0)) / (2 * h), (X(0, h) - X(0, -h)) / (2 * h)));
      if (g.z > 0) g = -g;
      REQUIRE(deg(angle_between(s.normal(p), g)) < 0.05);
    }
  }
}

TEST_CASE("sphere cap normals from the pixel-gradient formula match the analytic sphere normals") {
  const CameraModel cam = CameraModel::from_sensor(2.8, 2.3, 160, 120);
  const SceneOracle s = make_preset("sphere_cap_colored", cam, LightRig::ring(21.5, -11, 1.0));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> pu(-79.5, 79.5), pv(-59.5, 59.5);
  for (int i = 0; i < 100; ++i) {
    const PixelCoord p{pu(rng), pv(rng)};
    const Vec3d x = back_project(cam, p, s.depth(p).z);
    const Vec3d c{0, 0, s.surface.apex_depth_mm + s.surface.sphere_radius_mm};
    const Vec3d sphere = normalized(x - c);  // outward normal points back at the camera
    REQUIRE(deg(angle_between(s.normal(p), sphere)) < 0.1);
  }
}

TEST_CASE("light at the pinhole") {
  const LightDirection<double> d = light_direction(Vec3d{0, 0, 0}, Vec3d{0, 0, 35});
  CHECK(d.q.x == 0.0);
  CHECK(d.q.y == 0.0);
  CHECK(d.q.z == -1.0);
  CHECK(d.dist == 35.0);
}

TEST_CASE("light of the ring rig matches direct vector arithmetic") {
  const Vec3d l{21.5, 0, -11}, x{0, 0, 35};
  const LightDirection<double> d = light_direction(l, x);
  const double dist = std::sqrt(21.5 * 21.5 + 46.0 * 46.0);
  CHECK(d.dist == doctest::Approx(dist).epsilon(1e-14));
  CHECK(d.q.x == doctest::Approx(21.5 / dist).epsilon(1e-14));
  CHECK(d.q.y == 0.0);
  CHECK(d.q.z == doctest::Approx(-46.0 / dist).epsilon(1e-14));
}

TEST_CASE("unit light offset") {
  const Vec3d x{3, -2, 12};
  const LightDirection<double> d = light_direction(x + Vec3d{0, 0, 1}, x);
  CHECK(d.q.z == 1.0);
  CHECK(d.q.x == 0.0);
  CHECK(d.dist == 1.0);
  CHECK_THROWS_AS(light_direction(x, x), DegenerateError);
}

TEST_CASE("light direction is unit and spans the distance") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    const Vec3d l{u(rng), u(rng), u(rng)}, x{u(rng), u(rng), u(rng)};
    const LightDirection<double> d = light_direction(l, x);
    REQUIRE(std::abs(norm(d.q) - 1.0) < 1e-12);
    REQUIRE(std::abs(dot(d.q, l - x) - d.dist) < 1e-10);
  }
}

TEST_CASE("ring rig places one light per channel") {
  const LightRig rig = LightRig::ring(21.5, -11, 2.0);
  for (int c = 0; c < 3; ++c) {
    const LightSource& l = rig[c];
    CHECK(int(l.channel) == c);
    CHECK(l.intensity == 2.0);
    CHECK(std::hypot(l.position.x, l.position.y) == doctest::Approx(21.5).epsilon(1e-12));
    CHECK(l.position.z == -11.0);
  }
  CHECK(rig[0].position.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rig[0].position.y == doctest::Approx(21.5).epsilon(1e-12));
  CHECK_NOTHROW(rig.validate());
  LightRig bad = rig;
  bad[1].channel = Channel::kRed;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("normal map validation") {
  NormalMap m(2, 1);
  m.normals = {{0, 0, -1}, {0, 0.6, -0.8}};
  CHECK_NOTHROW(m.validate());
  m.normals[1] = {0, 0.6, 0.8};
  CHECK_THROWS_AS(m.validate(), DataError);
  m.mask[1] = 0;
  CHECK_NOTHROW(m.validate());
  m.normals[0] = {0, 0, -1.1};
  CHECK_THROWS_AS(m.validate(), DataError);
}
