#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ncps/brdf.hpp"
#include "ncps/optimizer.hpp"
#include "ncps/renderer.hpp"
#include "ncps/scene.hpp"

using namespace ncps;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return normalized(Vec3d{g(rng), g(rng), g(rng)});
}

// Random front-facing (q, view, n) with theta_h away from the pole.
struct Triple {
  Vec3d q, view, n;
};

Triple random_triple(std::mt19937_64& rng) {
  for (;;) {
    const Triple t{random_unit(rng), random_unit(rng), random_unit(rng)};
    if (dot(t.q, t.n) < 0.05 || dot(t.view, t.n) < 0.05) continue;
    const Vec3d h = normalized(t.q + t.view);
    if (angle_between(h, t.n) < 0.01 || angle_between(t.q, h) < 0.01) continue;
    return t;
  }
}

// Rodrigues rotation of v about the unit axis k.
Vec3d rotate(const Vec3d& v, const Vec3d& k, double a) {
  return v * std::cos(a) + cross(k, v) * std::sin(a) + k * (dot(k, v) * (1 - std::cos(a)));
}

double fold_pi(double phi) {
  phi = std::fmod(phi, kPi);
  return phi < 0 ? phi + kPi : phi;
}

// Distance on the circle of circumference pi.
double folded_distance(double a, double b) {
  const double d = std::abs(fold_pi(a) - fold_pi(b));
  return std::min(d, kPi - d);
}

// Textbook construction: express everything in a frame with n as the pole,
// rotate h onto the pole (about z by -phi_h, then about y by -theta_h) and
// read the angles of q in the rotated frame.
RusinkiewiczAngles rotation_oracle(const Vec3d& q, const Vec3d& view, const Vec3d& n) {
  const Vec3d t = normalized(cross(n, std::abs(n.x) < 0.5 ? Vec3d{1, 0, 0} : Vec3d{0, 0, 1}));
  const Vec3d b = cross(n, t);
  const auto local = [&](const Vec3d& v) { return Vec3d{dot(v, t), dot(v, b), dot(v, n)}; };
  const Vec3d h = local(normalized(q + view));
  const Vec3d ql = local(q);
  const double theta_h = std::acos(std::clamp(h.z, -1.0, 1.0));
  const double phi_h = std::atan2(h.y, h.x);
  const Vec3d r1 = rotate(ql, Vec3d{0, 0, 1}, -phi_h);
  const Vec3d d = rotate(r1, Vec3d{0, 1, 0}, -theta_h);
  return {theta_h, std::acos(std::clamp(d.z, -1.0, 1.0)), fold_pi(std::atan2(d.y, d.x))};
}

struct Brdf {
  ParamStore<double> store;
  BrdfField<double> field;

  explicit Brdf(bool shared = false, double c0 = 0.5) {
    BrdfConfig c;
    c.shared_channels = shared;
    c.c0 = c0;
    field = BrdfField<double>(c, store);
    store.freeze();
    std::mt19937_64 rng(1);
    field.initialize(store, rng);
  }

  void randomize(std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& x : store.flat()) x = u(rng);
  }
};

}  // namespace

TEST_CASE("retro-reflection along the normal") {
  const Vec3d n{0, 0, -1};
  const RusinkiewiczAngles a = rusinkiewicz(n, n, n);
  CHECK(a.theta_h == 0.0);
  CHECK(a.theta_d == 0.0);
}

TEST_CASE("retro-reflection off the normal") {
  const Vec3d n{0, 0, -1};
  const Vec3d q = normalized(Vec3d{0.3, -0.2, -1});
  const RusinkiewiczAngles a = rusinkiewicz(q, q, n);
  CHECK(a.theta_d == doctest::Approx(0.0).epsilon(1e-15).scale(1.0));
  CHECK(a.theta_h == doctest::Approx(angle_between(n, q)).epsilon(1e-14));
}

TEST_CASE("angles agree with the rotation-matrix construction") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const Triple t = random_triple(rng);
    const RusinkiewiczAngles a = rusinkiewicz(t.q, t.view, t.n);
    const RusinkiewiczAngles o = rotation_oracle(t.q, t.view, t.n);
    REQUIRE(std::abs(a.theta_h - o.theta_h) < 1e-9);
    REQUIRE(std::abs(a.theta_d - o.theta_d) < 1e-9);
    REQUIRE(folded_distance(a.phi_d, o.phi_d) < 1e-9);
    REQUIRE(a.theta_h >= 0.0);
    REQUIRE(a.theta_h <= kPi / 2);
    REQUIRE(a.theta_d >= 0.0);
    REQUIRE(a.theta_d <= kPi / 2);
    REQUIRE(a.phi_d >= 0.0);
    REQUIRE(a.phi_d < kPi);
  }
}

TEST_CASE("rusinkiewicz rejects degenerate and back-facing input") {
  const Vec3d n{0, 0, -1};
  const Vec3d q = normalized(Vec3d{0.2, 0.1, -1});
  CHECK_THROWS_AS(rusinkiewicz(q, -q, n), DegenerateError);
  CHECK_THROWS_AS(rusinkiewicz(q, normalized(Vec3d{0.2, 0, 1}), n), DomainError);
  CHECK_THROWS_AS(rusinkiewicz(Vec3d{0, 0, -2}, q, n), DomainError);
}

TEST_CASE("smooth vector features equal the features of the exact angles") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Triple t = random_triple(rng);
    const BrdfFeatures<double> a = brdf_features<double>(rusinkiewicz(t.q, t.view, t.n));
    const BrdfFeatures<double> b = brdf_features<double>(t.q, t.view, t.n);
    for (int k = 0; k < kBrdfFeatures; ++k) REQUIRE(std::abs(a[std::size_t(k)] - b[std::size_t(k)]) < 1e-9);
  }
}

TEST_CASE("initialized field outputs c0 on every channel") {
  for (double c0 : {0.5, 0.73}) {
    Brdf b(false, c0);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 100; ++i) {
      const Triple t = random_triple(rng);
      const std::array<double, 3> r = b.field.reflectance(b.store, rusinkiewicz(t.q, t.view, t.n));
      for (double v : r) REQUIRE(std::abs(v - c0) < 1e-15);
    }
  }
}

TEST_CASE("perturbing the red branch leaves green and blue bit-identical") {
  Brdf b;
  b.randomize(5, 0.5);
  std::mt19937_64 rng(6);
  std::vector<RusinkiewiczAngles> angles;
  std::vector<std::array<double, 3>> before;
  for (int i = 0; i < 50; ++i) {
    const Triple t = random_triple(rng);
    angles.push_back(rusinkiewicz(t.q, t.view, t.n));
    before.push_back(b.field.reflectance(b.store, angles.back()));
  }
  const Mlp<double>& red = b.field.branch(0);
  for (int l = 0; l < red.layers(); ++l)
    for (double& x : b.store.values(red.weight_id(l))) x += 0.1;
  bool red_changed = false;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const std::array<double, 3> after = b.field.reflectance(b.store, angles[i]);
    REQUIRE(after[1] == before[i][1]);
    REQUIRE(after[2] == before[i][2]);
    red_changed = red_changed || after[0] != before[i][0];
  }
  CHECK(red_changed);
}

TEST_CASE("shared branch broadcasts one value") {
  Brdf b(true, 0.4);
  CHECK(b.field.branch_count() == 1);
  std::mt19937_64 rng(7);
  const Triple t0 = random_triple(rng);
  const std::array<double, 3> init = b.field.shared_channel_reflectance(b.store, rusinkiewicz(t0.q, t0.view, t0.n));
  for (double v : init) CHECK(std::abs(v - 0.4) < 1e-15);
  b.randomize(8);
  for (int i = 0; i < 200; ++i) {
    const Triple t = random_triple(rng);
    const std::array<double, 3> r = b.field.reflectance(b.store, rusinkiewicz(t.q, t.view, t.n));
    REQUIRE(r[0] == r[1]);
    REQUIRE(r[1] == r[2]);
  }
}

TEST_CASE("reflectance is isotropic about the normal") {
  Brdf b;
  b.randomize(9);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ang(0, 2 * kPi);
  for (int i = 0; i < 500; ++i) {
    const Triple t = random_triple(rng);
    const double a = ang(rng);
    const std::array<double, 3> r0 = b.field.reflectance(b.store, rusinkiewicz(t.q, t.view, t.n));
    const std::array<double, 3> r1 =
        b.field.reflectance(b.store, rusinkiewicz(rotate(t.q, t.n, a), rotate(t.view, t.n, a), t.n));
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(r0[std::size_t(c)] - r1[std::size_t(c)]) < 1e-6);
  }
}

TEST_CASE("swapping light and view preserves angles and reflectance") {
  Brdf b;
  b.randomize(11);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    const Triple t = random_triple(rng);
    const RusinkiewiczAngles a = rusinkiewicz(t.q, t.view, t.n);
    const RusinkiewiczAngles s = rusinkiewicz(t.view, t.q, t.n);
    REQUIRE(std::abs(a.theta_h - s.theta_h) < 1e-12);
    REQUIRE(std::abs(a.theta_d - s.theta_d) < 1e-12);
    REQUIRE(folded_distance(a.phi_d, s.phi_d) < 1e-9);
    const std::array<double, 3> ra = b.field.reflectance(b.store, a), rs = b.field.reflectance(b.store, s);
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(ra[std::size_t(c)] - rs[std::size_t(c)]) < 1e-8);
  }
}

TEST_CASE("reflectance is non-negative at random parameters") {
  Brdf b;
  b.randomize(13, 2.0);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> th(0, kPi / 2), ph(0, kPi);
  Mat<double> x(kBrdfFeatures, 100000);
  for (int i = 0; i < x.cols(); ++i) {
    const BrdfFeatures<double> f = brdf_features<double>(RusinkiewiczAngles{th(rng), th(rng), ph(rng)});
    for (int k = 0; k < kBrdfFeatures; ++k) x(k, i) = f[std::size_t(k)];
  }
  for (int c = 0; c < 3; ++c) {
    MlpWorkspace<double> ws;
    Mat<double> out;
    b.field.forward(b.store, c, x, ws, out);
    CHECK(out.minCoeff() >= 0.0);
    CHECK(out.allFinite());
  }
}

TEST_CASE("reflectance depends on the angles only") {
  Brdf b;
  b.randomize(15);
  const RusinkiewiczAngles a{0.3, 0.7, 1.1};
  const BrdfFeatures<double> f = brdf_features<double>(a);
  // The same angles at two batch positions (two surface points) and alone.
  Mat<double> x(kBrdfFeatures, 3);
  for (int k = 0; k < kBrdfFeatures; ++k) {
    x(k, 0) = f[std::size_t(k)];
    x(k, 1) = 0.25;
    x(k, 2) = f[std::size_t(k)];
  }
  MlpWorkspace<double> ws;
  Mat<double> out;
  b.field.forward(b.store, 1, x, ws, out);
  CHECK(out(0, 0) == out(0, 2));
  CHECK(b.field.channel_reflectance(b.store, 1, f) == doctest::Approx(out(0, 0)).epsilon(1e-15));
}

TEST_CASE("batched backward matches central differences") {
  Brdf b;
  b.randomize(16, 0.5);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  Mat<double> x(kBrdfFeatures, 7), w(1, 7);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  for (int i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  const auto loss = [&](const ParamStore<double>& s, const Mat<double>& in) {
    MlpWorkspace<double> ws;
    Mat<double> out;
    b.field.forward(s, 2, in, ws, out);
    return out.cwiseProduct(w).sum();
  };
  MlpWorkspace<double> ws;
  Mat<double> out, gfeat;
  b.field.forward(b.store, 2, x, ws, out);
  std::vector<double> grad(b.store.size(), 0.0);
  b.field.backward(b.store, 2, ws, w, grad.data(), gfeat);
  const double h = 1e-6;
  const std::size_t blue = b.store.find(kBrdfGroup, "brdf.blue.layer0.weight");
  for (std::size_t i = 0; i < b.store.size(); i += 37) {
    ParamStore<double> p = b.store, m = b.store;
    p.flat()[i] += h;
    m.flat()[i] -= h;
    const double fd = (loss(p, x) - loss(m, x)) / (2 * h);
    REQUIRE(std::abs(grad[i] - fd) <= 1e-6 * std::abs(fd) + 1e-9);
    if (i < b.store.info(blue).offset) REQUIRE(grad[i] == 0.0);  // red and green branches unused
  }
  for (int i = 0; i < x.size(); ++i) {
    Mat<double> xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(b.store, xp) - loss(b.store, xm)) / (2 * h);
    REQUIRE(std::abs(gfeat.data()[i] - fd) <= 1e-6 * std::abs(fd) + 1e-9);
  }
}

TEST_CASE("fitting a constant albedo recovers it on every channel") {
  const CameraModel cam = CameraModel::from_sensor(2.8, 2.3, 80, 60);
  const LightRig rig = LightRig::ring(21.5, -11, 1.0);
  SurfaceParams sp;
  sp.kind = SurfaceKind::kSinBumps;
  sp.period_px = 20;
  MaterialParams mp;
  mp.albedo = {0.6, 0.6, 0.6};
  const RenderedScene rs = render_scene(make_scene(cam, rig, sp, mp, "albedo"));

  // Per-pixel reflectance targets I / g from the oracle geometry.
  std::array<Mat<double>, 3> feats;
  std::array<std::vector<double>, 3> targets;
  for (int c = 0; c < 3; ++c) feats[std::size_t(c)].resize(kBrdfFeatures, long(cam.pixel_count()));
  std::array<int, 3> count{};
  for (int row = 0; row < cam.height; ++row)
    for (int col = 0; col < cam.width; ++col) {
      const PixelCoord p = cam.pixel(row, col);
      const DepthSample d = rs.scene.depth(p);
      const ShadingTerms<double> t = shading_terms<double>(cam, rs.scene.rig, p, d.z, d.dz_du, d.dz_dv);
      for (int c = 0; c < 3; ++c) {
        const double g = t.geometry[std::size_t(c)];
        if (g <= 1e-6) continue;
        const int k = count[std::size_t(c)]++;
        for (int j = 0; j < kBrdfFeatures; ++j)
          feats[std::size_t(c)](j, k) = t.features[std::size_t(c)][std::size_t(j)];
        targets[std::size_t(c)].push_back(rs.image.at(rs.image.index(row, col), c) / g);
      }
    }
  Brdf b;
  Adam<double> adam(b.store.size(), {{0, b.store.size(), 5e-3}}, 0.9, 0.999, 1e-8);
  std::vector<double> grad(b.store.size());
  std::array<MlpWorkspace<double>, 3> ws;
  for (int it = 0; it < 400; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int c = 0; c < 3; ++c) {
      const Mat<double> x = feats[std::size_t(c)].leftCols(count[std::size_t(c)]);
      Mat<double> out, gfeat;
      b.field.forward(b.store, c, x, ws[std::size_t(c)], out);
      Mat<double> gr(1, x.cols());
      for (int i = 0; i < x.cols(); ++i) gr(0, i) = out(0, i) > targets[std::size_t(c)][std::size_t(i)] ? 1.0 : -1.0;
      gr /= double(x.cols());
      b.field.backward(b.store, c, ws[std::size_t(c)], gr, grad.data(), gfeat);
    }
    adam.step(b.store.flat(), grad, cosine_decay(it, 400, 0.01));
  }
  for (int c = 0; c < 3; ++c) {
    const Mat<double> x = feats[std::size_t(c)].leftCols(count[std::size_t(c)]);
    Mat<double> out;
    b.field.forward(b.store, c, x, ws[std::size_t(c)], out);
    CHECK((out.array() - 0.6).abs().maxCoeff() < 0.01);
  }
}
