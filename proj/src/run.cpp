#include "ncps/run.hpp"

#include <iostream>
#include <random>

#include "ncps/log.hpp"
#include "ncps/renderer.hpp"

namespace ncps {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kChannelNames[3] = {"red", "green", "blue"};

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory '" + p.string() + "': " + ec.message());
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Run directory

RunDirectory::RunDirectory(const std::string& path, const std::string& command, const RunConfig& config)
    : root_(path), command_(command) {
  if (path.empty()) throw ConfigError("paths.output must not be empty");
  ensure_dir(root_);
  write_json(file("config.resolved.json"), to_json(config));
  outputs_.push_back("config.resolved.json");
  log_.open(file("run.log"), std::ios::trunc);
  if (!log_) throw DataError("cannot open '" + file("run.log") + "' for writing");
  outputs_.push_back("run.log");
  log::set_min_level(log::Level::kInfo);
  log::set_sink([this](log::Level level, const std::string& m) {
    const char* tag = level == log::Level::kError ? "error"
                      : level == log::Level::kWarn ? "warn"
                      : level == log::Level::kInfo ? "info"
                                                    : "debug";
    log_ << "[" << tag << "] " << m << "\n";
    log_.flush();
    if (level >= log::Level::kWarn) std::cerr << "[" << tag << "] " << m << "\n";
  });
  log(command_ + ": writing to " + root_.string());
}

RunDirectory::~RunDirectory() {
  try {
    close(std::uncaught_exceptions() ? "failed" : "ok");
  } catch (...) {
  }
}

void RunDirectory::add_output(const std::string& name) { outputs_.push_back(name); }

void RunDirectory::log(const std::string& message) { log::info(message); }

void RunDirectory::close(const std::string& status) {
  if (closed_) return;
  closed_ = true;
  log::set_sink([](log::Level level, const std::string& m) {
    if (level >= log::Level::kWarn) std::cerr << "[" << (level == log::Level::kError ? "error" : "warn") << "] " << m << "\n";
  });
  log::set_min_level(log::Level::kWarn);
  log_.close();
  json manifest = {{"layout", kRunLayout}, {"command", command_}, {"status", status}, {"outputs", outputs_}};
  write_json(file("manifest.json"), manifest);
}

// ---------------------------------------------------------------------------
// Datasets

RenderedScene synthesize_dataset(const RunConfig& config, const std::string& dir) {
  const CameraModel cam = config.camera.camera();
  const LightRig rig = config.rig.rig();
  const RenderedScene rs = render_scene(make_preset(config.scene.preset, cam, rig));
  const fs::path root(dir);
  ensure_dir(root);
  save_pfm((root / "image.pfm").string(), rs.image);
  save_png16((root / "image.png").string(), rs.image);
  export_normal_map(rs.normals, (root / "normals_gt.png").string(), (root / "normals_gt.pfm").string());
  Image depth = rs.depth;
  for (std::size_t i = 0; i < depth.pixel_count(); ++i)
    if (!depth.mask[i]) depth.at(i, 0) = std::numeric_limits<float>::quiet_NaN();
  save_pfm((root / "depth_gt.pfm").string(), depth);

  const CrosstalkMatrix m = config.crosstalk.matrix();
  std::mt19937_64 rng(config.crosstalk.seed);
  const Image mixed = apply_crosstalk(rs.image, m, config.crosstalk.noise_sigma, rng);
  save_pfm((root / "image_crosstalk.pfm").string(), mixed);
  const BaselineCaptures b = make_baseline_captures(rs, m, config.crosstalk.noise_sigma, rng);
  for (int c = 0; c < 3; ++c) {
    save_pfm((root / (std::string("baseline_") + kChannelNames[c] + ".pfm")).string(), b.observed[std::size_t(c)]);
    save_pfm((root / (std::string("ideal_") + kChannelNames[c] + ".pfm")).string(), b.ideal[std::size_t(c)]);
  }

  json mj = json::array();
  for (const auto& row : m.m) mj.push_back(row);
  write_json((root / "scene.json").string(), {{"layout", kDatasetLayout},
                                              {"preset", config.scene.preset},
                                              {"exposure", rs.exposure},
                                              {"camera", to_json(rs.scene.camera)},
                                              {"rig", to_json(rs.scene.rig)},
                                              {"crosstalk", {{"matrix", mj}, {"noise_sigma", config.crosstalk.noise_sigma}}}});
  return rs;
}

Dataset load_dataset(const std::string& path, const RunConfig& config) {
  if (path.empty()) throw ConfigError("paths.input must name a dataset directory or an image");
  Dataset d;
  const fs::path p(path);
  std::string gt_dir = config.paths.dataset;
  if (fs::is_directory(p)) {
    const json scene = read_json((p / "scene.json").string());
    if (scene.value("layout", "") != kDatasetLayout) throw DataError(path + ": unknown dataset layout");
    d.camera = parse_camera_model(scene.at("camera"));
    d.rig = parse_light_rig(scene.at("rig"));
    d.preset = scene.value("preset", "");
    d.image = load_pfm((p / "image.pfm").string());
    if (gt_dir.empty()) gt_dir = path;
  } else {
    if (!fs::exists(p)) throw DataError("input '" + path + "' does not exist");
    d.camera = config.camera.camera();
    d.rig = config.rig.rig();
    d.image = load_image(path);
    if (!gt_dir.empty()) {
      // Camera and rig of a referenced dataset take precedence over the config.
      const json scene = read_json((fs::path(gt_dir) / "scene.json").string());
      d.camera = parse_camera_model(scene.at("camera"));
      d.rig = parse_light_rig(scene.at("rig"));
    }
  }
  if (d.image.channels != 3) throw DataError(path + ": expected a 3-channel image");
  if (d.image.width != d.camera.width || d.image.height != d.camera.height)
    throw DataError(path + ": image size does not match the camera");
  d.image.validate_radiance();
  if (!gt_dir.empty()) {
    const fs::path g(gt_dir);
    if (fs::exists(g / "normals_gt.pfm")) d.normals = load_normal_map((g / "normals_gt.pfm").string());
    if (fs::exists(g / "depth_gt.pfm")) d.depth = load_pfm((g / "depth_gt.pfm").string());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Reconstruction

ReconstructionSummary reconstruct_into(RunDirectory& dir, const Dataset& data, const RunConfig& config,
                                       const std::string& prefix) {
  if (!prefix.empty()) ensure_dir(dir.root() / prefix);
  const auto out = [&](const std::string& name) {
    dir.add_output(prefix + name);
    return dir.file(prefix + name);
  };

  OptimizeHooks hooks;
  hooks.on_iteration = [&](const HistoryEntry& e) {
    if (e.iteration % 250 == 0)
      dir.log("iteration " + std::to_string(e.iteration) + " mean L1 " + format_double(e.mean_l1));
  };
  hooks.on_divergence = [&](const ReconstructionModel<float>& last, const std::vector<HistoryEntry>& history) {
    ensure_dir(dir.root() / (prefix + "diagnostics"));
    save_checkpoint(out("diagnostics/last_finite.ckpt"), &last, nullptr);
    write_loss_history(out("diagnostics/loss_history.csv"), history);
  };

  ReconstructionSummary s{optimize(data.image, data.camera, data.rig, config.model, config.ablation, config.optimizer,
                                   hooks),
                          {},
                          std::nullopt};
  const ReconstructionModel<float>& model = s.result.model;
  std::vector<std::uint8_t> mask = loss_mask(data.image, config.optimizer.shadow_threshold);
  s.normals = predict_normals(model, mask);
  export_normal_map(s.normals, out("normals.png"), out("normals.pfm"));
  Image depth = predict_depth(model, mask);
  export_mesh(depth, model.camera, out("mesh.obj"));
  for (std::size_t i = 0; i < depth.pixel_count(); ++i)
    if (!depth.mask[i]) depth.at(i, 0) = std::numeric_limits<float>::quiet_NaN();
  save_pfm(out("depth.pfm"), depth);
  save_checkpoint(out("model.ckpt"), &model, nullptr);
  write_loss_history(out("loss_history.csv"), s.result.history);
  write_brdf_slice(out("brdf_slice.csv"), model);

  std::vector<Metric> metrics;
  const HistoryEntry& last = s.result.history.back();
  metrics.push_back({"loss", "final_sum_l1", last.sum_l1});
  metrics.push_back({"loss", "final_mean_l1", last.mean_l1});
  metrics.push_back({"optimizer", "iterations_run", double(s.result.iterations_run)});
  metrics.push_back({"optimizer", "stopped_early", s.result.stopped_early ? 1.0 : 0.0});
  metrics.push_back({"optimizer", "depth_clamps", double(s.result.depth_clamps)});
  metrics.push_back({"model", "c0", model.config.brdf.c0});
  if (model.ablation.no_brdf)
    for (int c = 0; c < 3; ++c) metrics.push_back({"albedo", kChannelNames[c], model.albedo[std::size_t(c)]});
  if (data.normals) {
    s.mae_deg = evaluate_mae(s.normals, *data.normals);
    metrics.push_back({"mae", "normals_deg", *s.mae_deg});
    dir.log("normal MAE " + format_double(*s.mae_deg) + " deg");
  }
  write_metrics(out("metrics.csv"), metrics);
  return s;
}

// ---------------------------------------------------------------------------
// Commands

int command_synth(const RunConfig& config) {
  config.validate();
  RunDirectory dir(config.paths.output, "synth", config);
  const RenderedScene rs = synthesize_dataset(config, config.paths.output);
  for (const char* n : {"image.pfm", "image.png", "normals_gt.pfm", "normals_gt.png", "depth_gt.pfm",
                        "image_crosstalk.pfm", "scene.json"})
    dir.add_output(n);
  for (const char* c : kChannelNames) {
    dir.add_output(std::string("baseline_") + c + ".pfm");
    dir.add_output(std::string("ideal_") + c + ".pfm");
  }
  dir.log("rendered preset " + config.scene.preset + " with exposure " + format_double(rs.exposure));
  // The dataset manifest replaces the generic run manifest.
  dir.close();
  write_file(dir.file("manifest.json"),
             json({{"layout", kDatasetLayout}, {"command", "synth"}, {"status", "ok"}, {"preset", config.scene.preset}})
                     .dump(2) +
                 "\n");
  return 0;
}

namespace {

std::optional<CrosstalkCorrector> corrector_from(const std::string& checkpoint) {
  if (checkpoint.empty()) return std::nullopt;
  Checkpoint ck = load_checkpoint(checkpoint);
  if (!ck.ccm) throw DataError(checkpoint + ": checkpoint has no crosstalk-correction section");
  return ck.ccm;
}

}  // namespace

int command_reconstruct(const RunConfig& config) {
  config.validate();
  Dataset data = load_dataset(config.paths.input, config);
  const std::optional<CrosstalkCorrector> ccm = corrector_from(config.paths.checkpoint);
  RunDirectory dir(config.paths.output, "reconstruct", config);
  if (ccm) {
    data.image = apply_ccm(*ccm, data.image);
    dir.log("applied crosstalk correction from " + config.paths.checkpoint);
  }
  reconstruct_into(dir, data, config);
  return 0;
}

int command_ccm_train(const RunConfig& config) {
  config.validate();
  const fs::path in(config.paths.input);
  if (!fs::is_directory(in)) throw ConfigError("ccm-train: paths.input must be a directory of baseline captures");
  std::array<Image, 3> observed, ideal;
  for (int c = 0; c < 3; ++c) {
    observed[std::size_t(c)] = load_pfm((in / (std::string("baseline_") + kChannelNames[c] + ".pfm")).string());
    ideal[std::size_t(c)] = load_pfm((in / (std::string("ideal_") + kChannelNames[c] + ".pfm")).string());
  }
  RunDirectory dir(config.paths.output, "ccm-train", config);
  const CcmReport before = ccm_residual(CrosstalkCorrector(config.ccm), observed, ideal);
  const CcmTraining t = train_ccm(observed, ideal, config.ccm);
  save_checkpoint(dir.file("model.ckpt"), nullptr, &t.corrector);
  dir.add_output("model.ckpt");
  std::string csv = "step,mean_l1\n";
  for (std::size_t i = 0; i < t.report.loss_history.size(); ++i)
    csv += std::to_string(i) + "," + format_double(t.report.loss_history[i]) + "\n";
  write_file(dir.file("ccm_loss.csv"), csv);
  dir.add_output("ccm_loss.csv");
  write_metrics(dir.file("metrics.csv"),
                {{"ccm", "holdout_residual_ratio", t.report.holdout_residual_ratio},
                 {"ccm", "uncorrected_residual_ratio", before.holdout_residual_ratio},
                 {"ccm", "holdout_samples", double(t.report.holdout_samples)},
                 {"ccm", "train_samples", double(t.report.train_samples)}});
  dir.add_output("metrics.csv");
  dir.log("held-out off-channel residual " + format_double(100 * t.report.holdout_residual_ratio) + "% of nominal");
  return 0;
}

int command_ccm_apply(const RunConfig& config) {
  config.validate();
  if (config.paths.checkpoint.empty()) throw ConfigError("ccm-apply: paths.checkpoint is required");
  const std::optional<CrosstalkCorrector> ccm = corrector_from(config.paths.checkpoint);
  const Image img = load_image(config.paths.input);
  RunDirectory dir(config.paths.output, "ccm-apply", config);
  save_pfm(dir.file("corrected.pfm"), apply_ccm(*ccm, img));
  dir.add_output("corrected.pfm");
  return 0;
}

int command_eval(const RunConfig& config) {
  config.validate();
  if (config.paths.dataset.empty()) throw ConfigError("eval: paths.dataset (ground truth) is required");
  fs::path est(config.paths.input);
  if (fs::is_directory(est)) est /= "normals.pfm";
  fs::path gt(config.paths.dataset);
  if (fs::is_directory(gt)) gt /= "normals_gt.pfm";
  const NormalMap e = load_normal_map(est.string());
  const NormalMap g = load_normal_map(gt.string());
  RunDirectory dir(config.paths.output, "eval", config);
  const double mae = evaluate_mae(e, g);
  write_metrics(dir.file("metrics.csv"), {{"mae", "normals_deg", mae}});
  dir.add_output("metrics.csv");
  dir.log("normal MAE " + format_double(mae) + " deg");
  std::cout << "mae_deg," << format_double(mae) << "\n";
  return 0;
}

int command_ablate(const RunConfig& config, const std::string& mode) {
  config.validate();
  if (mode != "no_brdf" && mode != "shared_channels" && mode != "all")
    throw ConfigError("ablate: mode must be no_brdf, shared_channels or all");
  const Dataset data = load_dataset(config.paths.input, config);
  RunDirectory dir(config.paths.output, "ablate", config);
  RunConfig full = config;
  full.ablation = {};
  std::vector<Metric> metrics;
  const ReconstructionSummary base = reconstruct_into(dir, data, full, "full/");
  const auto record = [&](const std::string& name, const ReconstructionSummary& s) {
    metrics.push_back({name, "final_mean_l1", s.result.history.back().mean_l1});
    if (s.mae_deg) metrics.push_back({name, "mae_deg", *s.mae_deg});
    if (s.mae_deg && base.mae_deg) metrics.push_back({name, "mae_margin_deg", *s.mae_deg - *base.mae_deg});
  };
  record("full", base);
  if (mode == "no_brdf" || mode == "all") {
    RunConfig c = full;
    c.ablation.no_brdf = true;
    record("no_brdf", reconstruct_into(dir, data, c, "no_brdf/"));
  }
  if (mode == "shared_channels" || mode == "all") {
    RunConfig c = full;
    c.ablation.shared_channels = true;
    record("shared_channels", reconstruct_into(dir, data, c, "shared_channels/"));
  }
  write_metrics(dir.file("metrics.csv"), metrics);
  dir.add_output("metrics.csv");
  return 0;
}

}  // namespace ncps
