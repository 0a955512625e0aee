#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ncps/ccm.hpp"
#include "ncps/config.hpp"
#include "ncps/io.hpp"
#include "ncps/optimizer.hpp"
#include "ncps/scene.hpp"

namespace ncps {

/// Identifier of the run-directory layout written into every manifest.
inline constexpr const char* kRunLayout = "ncps-run/1";
inline constexpr const char* kDatasetLayout = "ncps-dataset/1";

/// Output directory of one subcommand: creates the directory, copies the
/// resolved configuration, tees log messages into run.log and writes the
/// manifest when closed.
class RunDirectory {
 public:
  RunDirectory(const std::string& path, const std::string& command, const RunConfig& config);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  std::string file(const std::string& name) const { return (root_ / name).string(); }
  const std::filesystem::path& root() const { return root_; }

  /// Records an output file for the manifest.
  void add_output(const std::string& name);
  void log(const std::string& message);
  /// Writes manifest.json; called by the destructor if not called explicitly.
  void close(const std::string& status = "ok");

 private:
  std::filesystem::path root_;
  std::string command_;
  std::vector<std::string> outputs_;
  std::ofstream log_;
  bool closed_ = false;
};

/// Synthetic capture plus what is known about it.
struct Dataset {
  Image image;
  CameraModel camera;
  LightRig rig;
  std::optional<NormalMap> normals;  // ground truth, when available
  std::optional<Image> depth;        // ground truth, when available
  std::string preset;
};

/// Renders the configured preset and writes image, ground truth, rig and
/// single-LED baseline captures (with the configured crosstalk) to `dir`.
RenderedScene synthesize_dataset(const RunConfig& config, const std::string& dir);

/// Reads a dataset directory, or a bare image file whose camera and rig
/// come from the configuration.
Dataset load_dataset(const std::string& path, const RunConfig& config);

struct ReconstructionSummary {
  OptimizeResult result;
  NormalMap normals;
  std::optional<double> mae_deg;
};

/// Optimizes, then writes normals, depth, mesh, checkpoint, loss history,
/// BRDF slice and metrics into `dir`. On divergence a diagnostics/
/// subdirectory with the last finite model and the history is written.
ReconstructionSummary reconstruct_into(RunDirectory& dir, const Dataset& data, const RunConfig& config,
                                       const std::string& prefix = "");

/// Subcommand entry points; each validates before computing and returns
/// the process exit code. Errors propagate as ncps::Error.
int command_synth(const RunConfig& config);
int command_reconstruct(const RunConfig& config);
int command_ccm_train(const RunConfig& config);
int command_ccm_apply(const RunConfig& config);
int command_eval(const RunConfig& config);
int command_ablate(const RunConfig& config, const std::string& mode);

}  // namespace ncps
