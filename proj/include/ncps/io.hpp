#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ncps/ccm.hpp"
#include "ncps/geometry.hpp"
#include "ncps/image.hpp"
#include "ncps/optimizer.hpp"

namespace ncps {

// Portable float map: "PF" (3 channels) or "Pf" (1 channel), little-endian
// (scale -1.0), rows stored bottom to top. Invalid pixels are written as NaN
// and NaN samples load as invalid pixels.
std::string encode_pfm(const Image& img);
Image decode_pfm(std::string_view bytes);
void save_pfm(const std::string& path, const Image& img);
Image load_pfm(const std::string& path);

/// 8- or 16-bit PNG; values are normalized to [0, 1], optionally passed
/// through the inverse sRGB curve, then multiplied by `exposure`.
Image load_png(const std::string& path, bool inverse_gamma = false, double exposure = 1.0);
/// 16-bit PNG; values are clamped to [0, 1] before quantization.
void save_png16(const std::string& path, const Image& img);

/// PFM or PNG chosen by file extension.
Image load_image(const std::string& path, bool inverse_gamma = false);
void save_image(const std::string& path, const Image& img);

/// Visualization colors (n' + 1) / 2 with n' = (n.x, n.y, -n.z), so that
/// camera-facing normals get n'.z >= 0. Invalid pixels are black.
Image normal_visualization(const NormalMap& normals);

/// Writes the visualization as 16-bit PNG and the raw normals (internal
/// convention, zero at invalid pixels) as a float map. Throws DataError
/// if a valid normal is not unit length.
void export_normal_map(const NormalMap& normals, const std::string& png_path, const std::string& pfm_path);
NormalMap load_normal_map(const std::string& pfm_path);

struct Mesh {
  std::vector<Vec3d> vertices;
  std::vector<std::array<int, 3>> faces;  // zero-based
};

/// Back-projects every valid depth pixel and splits each fully valid pixel
/// quad into two triangles. Throws DataError with fewer than 3 valid pixels.
Mesh depth_to_mesh(const Image& depth, const CameraModel& cam);
void save_obj(const std::string& path, const Mesh& mesh);
Mesh load_obj(const std::string& path);
Mesh export_mesh(const Image& depth, const CameraModel& cam, const std::string& path);

/// Model file: magic, format version, a JSON header (configuration and array
/// layout) and the raw parameter blocks. Either section may be absent.
struct Checkpoint {
  std::optional<ReconstructionModel<float>> model;
  std::optional<CrosstalkCorrector> ccm;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ReconstructionModel<float>* model,
                     const CrosstalkCorrector* ccm);
Checkpoint load_checkpoint(const std::string& path);

struct Metric {
  std::string metric;
  std::string name;
  double value = 0.0;
};

void write_loss_history(const std::string& path, const std::vector<HistoryEntry>& history);
std::vector<HistoryEntry> read_loss_history(const std::string& path);
void write_metrics(const std::string& path, const std::vector<Metric>& metrics);
std::vector<Metric> read_metrics(const std::string& path);

/// Reflectance on a grid of (theta_h, theta_d) at fixed phi_d = 90 degrees.
void write_brdf_slice(const std::string& path, const ReconstructionModel<float>& model, int steps = 19);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

/// Number formatting used by every text output: shortest round-trip form.
std::string format_double(double v);

}  // namespace ncps
