#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "ncps/ccm.hpp"
#include "ncps/geometry.hpp"
#include "ncps/optimizer.hpp"
#include "ncps/scene.hpp"

namespace ncps {

struct CameraConfig {
  int width = 160;
  int height = 120;
  double focal_length_mm = 2.8;
  double sensor_width_mm = 2.3;
  /// Principal point in pixels; defaults to the image center.
  std::optional<double> cx, cy;

  CameraModel camera() const;
};

struct RigConfig {
  double radius_mm = 21.5;
  double z_mm = -11.0;
  double intensity = 1.0;
  std::array<double, 3> angles_deg{90.0, 210.0, 330.0};

  LightRig rig() const;
};

struct SceneConfig {
  std::string preset = "sin_bumps_lambertian";
};

struct CrosstalkConfig {
  double diagonal = 1.0;
  double off_diagonal = 0.15;
  double noise_sigma = 0.002;
  std::uint64_t seed = 11;

  CrosstalkMatrix matrix() const { return CrosstalkMatrix::uniform(diagonal, off_diagonal); }
};

struct PathConfig {
  std::string input;    // image file or dataset directory
  std::string output = "run";
  std::string dataset;  // dataset directory with ground truth, for eval
  std::string checkpoint;
};

/// Everything a run needs, in one file.
struct RunConfig {
  CameraConfig camera;
  RigConfig rig;
  SceneConfig scene;
  ModelConfig model;
  OptimizerConfig optimizer;
  AblationConfig ablation;
  CcmConfig ccm;
  CrosstalkConfig crosstalk;
  PathConfig paths;

  /// Throws ConfigError on the first invalid field; nothing is computed before this passes.
  void validate() const;
};

/// Strict parse: unknown keys and wrongly typed values are ConfigErrors.
/// Missing keys keep their defaults.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig parse_model_config(const nlohmann::json& j);
nlohmann::json to_json(const CameraModel& cam);
CameraModel parse_camera_model(const nlohmann::json& j);
nlohmann::json to_json(const LightRig& rig);
LightRig parse_light_rig(const nlohmann::json& j);
nlohmann::json to_json(const CcmConfig& config);
CcmConfig parse_ccm_config(const nlohmann::json& j);

/// Environment overrides, limited to paths and the thread count:
/// NCPS_INPUT, NCPS_OUTPUT, NCPS_DATASET, NCPS_CHECKPOINT, NCPS_THREADS.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
void apply_env_overrides(RunConfig& config, const EnvLookup& env);
void apply_env_overrides(RunConfig& config);

}  // namespace ncps
