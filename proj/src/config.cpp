#include "ncps/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace ncps {

using nlohmann::json;

CameraModel CameraConfig::camera() const {
  if (!(sensor_width_mm > 0) || !(focal_length_mm > 0))
    throw ConfigError("camera: focal_length_mm and sensor_width_mm must be positive");
  if (width < 2 || height < 2) throw ConfigError("camera: width and height must be at least 2");
  CameraModel cam = CameraModel::from_sensor(focal_length_mm, sensor_width_mm, width, height);
  if (cx) cam.cx = *cx;
  if (cy) cam.cy = *cy;
  cam.validate();
  return cam;
}

LightRig RigConfig::rig() const {
  LightRig r = LightRig::ring(radius_mm, z_mm, intensity, angles_deg);
  r.validate();
  return r;
}

void RunConfig::validate() const {
  camera.camera();
  rig.rig();
  model.validate();
  optimizer.validate();
  ccm.validate();
  crosstalk.matrix();
  if (!(crosstalk.noise_sigma >= 0)) throw ConfigError("crosstalk: noise_sigma must be non-negative");
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), scene.preset) == names.end())
    throw ConfigError("scene: unknown preset '" + scene.preset + "'");
}

namespace {

// Walks one JSON object, type-checking each requested key and rejecting
// any key that was never requested.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      const auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) fail(key, "integer out of range");
      out = int(x);
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
        fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number()) fail(key, "expected a number or null");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of integers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_integer()) fail(key, "expected an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  void get(const char* key, std::array<double, 3>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 3) fail(key, "expected an array of 3 numbers");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!(*v)[i].is_number()) fail(key, "expected an array of 3 numbers");
        out[i] = (*v)[i].get<double>();
      }
    }
  }

  /// Nested object, or nullopt when absent.
  std::optional<Reader> child(const char* key) {
    if (const json* v = find(key)) return Reader(*v, path_ + "." + key);
    return std::nullopt;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(path_ + "." + key + ": " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read(Reader& r, HashEncodingConfig& c) {
  r.get("levels", c.levels);
  r.get("features_per_level", c.features_per_level);
  r.get("log2_table_size", c.log2_table_size);
  r.get("base_resolution", c.base_resolution);
  r.get("growth_factor", c.growth_factor);
  r.get("init_range", c.init_range);
  r.finish();
}

void read(Reader& r, SirenConfig& c) {
  r.get("hidden", c.hidden);
  r.get("omega0", c.omega0);
  r.get("output_scale", c.output_scale);
  r.finish();
}

void read(Reader& r, DepthConfig& c) {
  r.get("z0_mm", c.z0_mm);
  r.get("scale_mm", c.scale_mm);
  r.get("min_depth_mm", c.min_depth_mm);
  r.finish();
}

void read(Reader& r, BrdfConfig& c) {
  r.get("hidden", c.hidden);
  r.get("c0", c.c0);
  r.get("shared_channels", c.shared_channels);
  r.finish();
}

void read(Reader& r, ModelConfig& c) {
  if (auto s = r.child("hash")) read(*s, c.hash);
  if (auto s = r.child("siren")) read(*s, c.siren);
  if (auto s = r.child("depth")) read(*s, c.depth);
  if (auto s = r.child("brdf")) read(*s, c.brdf);
  r.get("auto_c0", c.auto_c0);
  r.finish();
}

void read(Reader& r, OptimizerConfig& c) {
  r.get("iterations", c.iterations);
  r.get("lr_surface", c.lr_surface);
  r.get("lr_brdf", c.lr_brdf);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("epsilon", c.epsilon);
  r.get("lr_min_fraction", c.lr_min_fraction);
  r.get("batch_size", c.batch_size);
  r.get("seed", c.seed);
  r.get("reproducible", c.reproducible);
  r.get("threads", c.threads);
  r.get("chunk_size", c.chunk_size);
  r.get("early_stop_window", c.early_stop_window);
  r.get("early_stop_tolerance", c.early_stop_tolerance);
  r.get("shadow_threshold", c.shadow_threshold);
  r.get("smoothness_weight", c.smoothness_weight);
  r.finish();
}

void read(Reader& r, CcmConfig& c) {
  r.get("hidden", c.hidden);
  r.get("iterations", c.iterations);
  r.get("lr", c.lr);
  r.get("lr_min_fraction", c.lr_min_fraction);
  r.get("batch_size", c.batch_size);
  r.get("holdout_fraction", c.holdout_fraction);
  r.get("seed", c.seed);
  r.finish();
}

json hash_json(const HashEncodingConfig& c) {
  return {{"levels", c.levels},
          {"features_per_level", c.features_per_level},
          {"log2_table_size", c.log2_table_size},
          {"base_resolution", c.base_resolution},
          {"growth_factor", c.growth_factor},
          {"init_range", c.init_range}};
}

json optimizer_json(const OptimizerConfig& c) {
  return {{"iterations", c.iterations},
          {"lr_surface", c.lr_surface},
          {"lr_brdf", c.lr_brdf},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"lr_min_fraction", c.lr_min_fraction},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"reproducible", c.reproducible},
          {"threads", c.threads},
          {"chunk_size", c.chunk_size},
          {"early_stop_window", c.early_stop_window},
          {"early_stop_tolerance", c.early_stop_tolerance},
          {"shadow_threshold", c.shadow_threshold},
          {"smoothness_weight", c.smoothness_weight}};
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"hash", hash_json(c.hash)},
          {"siren", {{"hidden", c.siren.hidden}, {"omega0", c.siren.omega0}, {"output_scale", c.siren.output_scale}}},
          {"depth",
           {{"z0_mm", c.depth.z0_mm}, {"scale_mm", c.depth.scale_mm}, {"min_depth_mm", c.depth.min_depth_mm}}},
          {"brdf", {{"hidden", c.brdf.hidden}, {"c0", c.brdf.c0}, {"shared_channels", c.brdf.shared_channels}}},
          {"auto_c0", c.auto_c0}};
}

ModelConfig parse_model_config(const json& j) {
  ModelConfig c;
  Reader r(j, "model");
  read(r, c);
  c.validate();
  return c;
}

json to_json(const CcmConfig& c) {
  return {{"hidden", c.hidden},
          {"iterations", c.iterations},
          {"lr", c.lr},
          {"lr_min_fraction", c.lr_min_fraction},
          {"batch_size", c.batch_size},
          {"holdout_fraction", c.holdout_fraction},
          {"seed", c.seed}};
}

CcmConfig parse_ccm_config(const json& j) {
  CcmConfig c;
  Reader r(j, "ccm");
  read(r, c);
  c.validate();
  return c;
}

json to_json(const CameraModel& cam) {
  return {{"focal_length_px", cam.focal_length_px}, {"cx", cam.cx},
          {"cy", cam.cy},
          {"width", cam.width},
          {"height", cam.height},
          {"pixel_pitch_mm", cam.pixel_pitch_mm}};
}

CameraModel parse_camera_model(const json& j) {
  CameraModel cam;
  Reader r(j, "camera_model");
  r.get("focal_length_px", cam.focal_length_px);
  r.get("cx", cam.cx);
  r.get("cy", cam.cy);
  r.get("width", cam.width);
  r.get("height", cam.height);
  r.get("pixel_pitch_mm", cam.pixel_pitch_mm);
  r.finish();
  cam.validate();
  return cam;
}

json to_json(const LightRig& rig) {
  json lights = json::array();
  for (const LightSource& l : rig.lights)
    lights.push_back({{"position", {l.position.x, l.position.y, l.position.z}},
                      {"intensity", l.intensity},
                      {"channel", int(l.channel)}});
  return {{"lights", lights}};
}

LightRig parse_light_rig(const json& j) {
  LightRig rig;
  if (!j.is_object() || !j.contains("lights")) throw ConfigError("rig: expected an object with 'lights'");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "lights") throw ConfigError("rig: unknown key '" + it.key() + "'");
  const json& lights = j.at("lights");
  if (!lights.is_array() || lights.size() != 3) throw ConfigError("rig.lights: expected 3 lights");
  for (std::size_t i = 0; i < 3; ++i) {
    Reader lr(lights[i], "rig.lights[" + std::to_string(i) + "]");
    std::array<double, 3> p{};
    int channel = int(i);
    lr.get("position", p);
    lr.get("intensity", rig.lights[i].intensity);
    lr.get("channel", channel);
    lr.finish();
    rig.lights[i].position = {p[0], p[1], p[2]};
    rig.lights[i].channel = Channel(channel);
  }
  rig.validate();
  return rig;
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Reader r(j, "config");
  if (auto s = r.child("camera")) {
    s->get("width", c.camera.width);
    s->get("height", c.camera.height);
    s->get("focal_length_mm", c.camera.focal_length_mm);
    s->get("sensor_width_mm", c.camera.sensor_width_mm);
    s->get("cx", c.camera.cx);
    s->get("cy", c.camera.cy);
    s->finish();
  }
  if (auto s = r.child("rig")) {
    s->get("radius_mm", c.rig.radius_mm);
    s->get("z_mm", c.rig.z_mm);
    s->get("intensity", c.rig.intensity);
    s->get("angles_deg", c.rig.angles_deg);
    s->finish();
  }
  if (auto s = r.child("scene")) {
    s->get("preset", c.scene.preset);
    s->finish();
  }
  if (auto s = r.child("model")) read(*s, c.model);
  if (auto s = r.child("optimizer")) read(*s, c.optimizer);
  if (auto s = r.child("ablation")) {
    s->get("no_brdf", c.ablation.no_brdf);
    s->get("shared_channels", c.ablation.shared_channels);
    s->finish();
  }
  if (auto s = r.child("ccm")) read(*s, c.ccm);
  if (auto s = r.child("crosstalk")) {
    s->get("diagonal", c.crosstalk.diagonal);
    s->get("off_diagonal", c.crosstalk.off_diagonal);
    s->get("noise_sigma", c.crosstalk.noise_sigma);
    s->get("seed", c.crosstalk.seed);
    s->finish();
  }
  if (auto s = r.child("paths")) {
    s->get("input", c.paths.input);
    s->get("output", c.paths.output);
    s->get("dataset", c.paths.dataset);
    s->get("checkpoint", c.paths.checkpoint);
    s->finish();
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  json cam = {{"width", c.camera.width},
              {"height", c.camera.height},
              {"focal_length_mm", c.camera.focal_length_mm},
              {"sensor_width_mm", c.camera.sensor_width_mm},
              {"cx", c.camera.cx ? json(*c.camera.cx) : json(nullptr)},
              {"cy", c.camera.cy ? json(*c.camera.cy) : json(nullptr)}};
  return {{"camera", cam},
          {"rig",
           {{"radius_mm", c.rig.radius_mm},
            {"z_mm", c.rig.z_mm},
            {"intensity", c.rig.intensity},
            {"angles_deg", c.rig.angles_deg}}},
          {"scene", {{"preset", c.scene.preset}}},
          {"model", to_json(c.model)},
          {"optimizer", optimizer_json(c.optimizer)},
          {"ablation", {{"no_brdf", c.ablation.no_brdf}, {"shared_channels", c.ablation.shared_channels}}},
          {"ccm", to_json(c.ccm)},
          {"crosstalk",
           {{"diagonal", c.crosstalk.diagonal},
            {"off_diagonal", c.crosstalk.off_diagonal},
            {"noise_sigma", c.crosstalk.noise_sigma},
            {"seed", c.crosstalk.seed}}},
          {"paths",
           {{"input", c.paths.input},
            {"output", c.paths.output},
            {"dataset", c.paths.dataset},
            {"checkpoint", c.paths.checkpoint}}}};
}

void apply_env_overrides(RunConfig& config, const EnvLookup& env) {
  if (auto v = env("NCPS_INPUT")) config.paths.input = *v;
  if (auto v = env("NCPS_OUTPUT")) config.paths.output = *v;
  if (auto v = env("NCPS_DATASET")) config.paths.dataset = *v;
  if (auto v = env("NCPS_CHECKPOINT")) config.paths.checkpoint = *v;
  if (auto v = env("NCPS_THREADS")) {
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(*v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (v->empty() || used != v->size() || n < 0) throw ConfigError("NCPS_THREADS must be a non-negative integer, got '" + *v + "'");
    config.optimizer.threads = n;
  }
}

void apply_env_overrides(RunConfig& config) {
  apply_env_overrides(config, [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  });
}

}  // namespace ncps
