#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ncps/error.hpp"
#include "ncps/jet.hpp"

namespace ncps {

template <typename T>
struct Vec3 {
  T x{}, y{}, z{};

  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3 operator*(const Vec3& a, const T& s) { return {a.x * s, a.y * s, a.z * s}; }
  friend Vec3 operator*(const T& s, const Vec3& a) { return a * s; }
  friend Vec3 operator/(const Vec3& a, const T& s) { return {a.x / s, a.y / s, a.z / s}; }

  template <typename U>
  Vec3<U> cast() const {
    return {U(x), U(y), U(z)};
  }
};

using Vec3d = Vec3<double>;

template <typename T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
T squared_norm(const Vec3<T>& a) {
  return dot(a, a);
}

template <typename T>
T norm(const Vec3<T>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

/// l2 normalization; throws DegenerateError on a zero vector.
template <typename T>
Vec3<T> normalized(const Vec3<T>& a) {
  const T len = norm(a);
  if (!(value_of(len) > 0)) throw DegenerateError("cannot normalize a zero-length vector");
  return a / len;
}

/// Angle between two unit vectors in radians, robust near 0 and pi.
inline double angle_between(const Vec3d& a, const Vec3d& b) {
  return std::atan2(norm(cross(a, b)), dot(a, b));
}

/// Pixel position relative to the principal point, in pixels.
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

/// Pinhole intrinsics. Pixel (row, col) has centered coordinates
/// u = col - cx, v = row - cy; the focal length is in pixels so that
/// u / f is the tangent of the ray angle.
struct CameraModel {
  double focal_length_px = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double pixel_pitch_mm = 0.0;

  /// Square pixels with pitch sensor_width_mm / width; principal point at the image center.
  static CameraModel from_sensor(double focal_length_mm, double sensor_width_mm, int width,
                                 int height);

  /// Throws ConfigError if any invariant is violated.
  void validate() const;

  PixelCoord pixel(int row, int col) const { return {col - cx, row - cy}; }

  /// Map a pixel into [0,1]^2 over the full image rectangle.
  std::array<double, 2> to_unit_square(const PixelCoord& p) const {
    return {(p.u + cx + 0.5) / width, (p.v + cy + 0.5) / height};
  }

  std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
};

/// x = (z u / f, z v / f, z). Throws DomainError for z <= 0.
template <typename T>
Vec3<T> back_project(const CameraModel& cam, const PixelCoord& p, const T& z) {
  if (!(value_of(z) > 0)) throw DomainError("back_project requires positive depth");
  const T s = z / T(cam.focal_length_px);
  return {s * T(p.u), s * T(p.v), z};
}

/// Inverse of back_project; requires x.z > 0.
PixelCoord project(const CameraModel& cam, const Vec3d& x);

/// Perspective normal from depth and its pixel-space gradient:
///   n = normalize(f dz/du, f dz/dv, -z - dz/du u - dz/dv v).
/// n.z < 0 faces the camera.
template <typename T>
Vec3<T> normal_from_depth(const CameraModel& cam, const PixelCoord& p, const T& z, const T& dz_du,
                          const T& dz_dv) {
  const T f(cam.focal_length_px);
  const Vec3<T> w{f * dz_du, f * dz_dv, -z - dz_du * T(p.u) - dz_dv * T(p.v)};
  if (!(value_of(squared_norm(w)) > 0))
    throw DegenerateError("normal_from_depth: zero-length pre-normalization vector");
  return w / norm(w);
}

template <typename T>
struct LightDirection {
  Vec3<T> q;  // unit vector from the surface point towards the light
  T dist;
};

/// q = (l - x) / |l - x|. Throws DegenerateError if the points coincide.
template <typename T>
LightDirection<T> light_direction(const Vec3<T>& light_pos, const Vec3<T>& x) {
  const Vec3<T> d = light_pos - x;
  const T dist = norm(d);
  if (!(value_of(dist) > 0)) throw DegenerateError("light_direction: light coincides with surface point");
  return {d / dist, dist};
}

enum class Channel : int { kRed = 0, kGreen = 1, kBlue = 2 };

struct LightSource {
  Vec3d position;
  double intensity = 1.0;
  Channel channel = Channel::kRed;
};

/// Exactly one light per color channel, stored in channel order.
struct LightRig {
  std::array<LightSource, 3> lights;

  /// Three lights on a lateral circle at a fixed longitudinal offset.
  /// Angles are measured in the image plane from the +x axis.
  static LightRig ring(double radius_mm, double z_mm, double intensity,
                       std::array<double, 3> angles_deg = {90.0, 210.0, 330.0});

  void validate() const;

  const LightSource& operator[](int channel) const { return lights[std::size_t(channel)]; }
  LightSource& operator[](int channel) { return lights[std::size_t(channel)]; }
};

/// Per-pixel unit normals in the camera-facing convention (n.z < 0), row-major.
struct NormalMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3d> normals;
  std::vector<std::uint8_t> mask;

  NormalMap() = default;
  NormalMap(int w, int h) : width(w), height(h), normals(std::size_t(w) * h), mask(std::size_t(w) * h, 1) {}

  std::size_t index(int row, int col) const { return std::size_t(row) * width + col; }
  std::size_t size() const { return normals.size(); }

  /// Throws DataError if a valid pixel is not unit length (1e-6) or not camera-facing.
  void validate() const;
};

}  // namespace ncps
