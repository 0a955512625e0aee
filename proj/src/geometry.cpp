#include "ncps/geometry.hpp"

#include <numbers>
#include <string>

namespace ncps {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kDomain: return "domain";
    case ErrorCategory::kDegenerate: return "degenerate";
    case ErrorCategory::kDivergence: return "divergence";
    case ErrorCategory::kTrace: return "trace";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kData: return 3;
    case ErrorCategory::kDivergence: return 4;
    default: return 3;
  }
}

CameraModel CameraModel::from_sensor(double focal_length_mm, double sensor_width_mm, int width,
                                     int height) {
  if (!(sensor_width_mm > 0) || width <= 0 || height <= 0)
    throw ConfigError("camera: sensor width and image size must be positive");
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.pixel_pitch_mm = sensor_width_mm / width;
  cam.focal_length_px = focal_length_mm / cam.pixel_pitch_mm;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.validate();
  return cam;
}

void CameraModel::validate() const {
  if (!(focal_length_px > 0) || !std::isfinite(focal_length_px))
    throw ConfigError("camera: focal_length_px must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera: width and height must be positive");
  if (!(cx >= 0 && cx <= width && cy >= 0 && cy <= height))
    throw ConfigError("camera: principal point must lie inside the image");
}

PixelCoord project(const CameraModel& cam, const Vec3d& x) {
  if (!(x.z > 0)) throw DomainError("project requires a point in front of the camera");
  return {cam.focal_length_px * x.x / x.z, cam.focal_length_px * x.y / x.z};
}

LightRig LightRig::ring(double radius_mm, double z_mm, double intensity,
                        std::array<double, 3> angles_deg) {
  LightRig rig;
  for (int c = 0; c < 3; ++c) {
    const double a = angles_deg[std::size_t(c)] * std::numbers::pi / 180.0;
    rig[c].position = {radius_mm * std::cos(a), radius_mm * std::sin(a), z_mm};
    rig[c].intensity = intensity;
    rig[c].channel = static_cast<Channel>(c);
  }
  rig.validate();
  return rig;
}

void LightRig::validate() const {
  for (int c = 0; c < 3; ++c) {
    const LightSource& l = (*this)[c];
    if (static_cast<int>(l.channel) != c)
      throw ConfigError("light rig: channels R, G, B must each appear exactly once");
    if (!(l.intensity > 0) || !std::isfinite(l.intensity))
      throw ConfigError("light rig: intensity must be positive");
    if (!std::isfinite(l.position.x) || !std::isfinite(l.position.y) || !std::isfinite(l.position.z))
      throw ConfigError("light rig: non-finite light position");
  }
}

void NormalMap::validate() const {
  if (normals.size() != std::size_t(width) * height || mask.size() != normals.size())
    throw DataError("normal map: storage does not match dimensions");
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3d& n = normals[i];
    if (std::abs(norm(n) - 1.0) > 1e-6)
      throw DataError("normal map: pixel " + std::to_string(i) + " is not unit length");
    if (!(n.z < 0)) throw DataError("normal map: pixel " + std::to_string(i) + " faces away from the camera");
  }
}

}  // namespace ncps
