#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ncps/brdf.hpp"
#include "ncps/geometry.hpp"
#include "ncps/image.hpp"
#include "ncps/params.hpp"
#include "ncps/surface.hpp"

namespace ncps {

struct ModelConfig {
  HashEncodingConfig hash;
  SirenConfig siren;
  DepthConfig depth;
  BrdfConfig brdf;
  /// Derive the BRDF scale c0 from a least-squares albedo fit on the initial geometry.
  bool auto_c0 = true;

  void validate() const;
};

struct AblationConfig {
  /// Replace the neural BRDF with a per-channel least-squares albedo.
  bool no_brdf = false;
  /// One BRDF branch shared by all channels.
  bool shared_channels = false;
};

struct OptimizerConfig {
  int iterations = 5000;
  double lr_surface = 1e-3;
  double lr_brdf = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Cosine decay from lr to lr * lr_min_fraction over the iteration budget.
  double lr_min_fraction = 0.01;
  /// Pixels per iteration. 0 picks automatically: every valid pixel up to
  /// kFullBatchLimit of them, random batches of kAutoBatch beyond that.
  int batch_size = 0;
  static constexpr std::size_t kFullBatchLimit = 160 * 120;
  static constexpr std::size_t kAutoBatch = 16384;
  std::uint64_t seed = 1;
  bool reproducible = true;
  int threads = 0;
  /// Fixed partition of a batch into chunks; reductions follow chunk order.
  int chunk_size = 4096;
  int early_stop_window = 500;
  double early_stop_tolerance = 1e-6;
  double shadow_threshold = 1e-4;
  /// Extension, off by default: weight of a sum of squared depth gradients.
  double smoothness_weight = 0.0;

  void validate() const;
};

/// Learnable fields plus everything needed to render with them.
template <typename T>
struct ReconstructionModel {
  CameraModel camera;
  LightRig rig;
  ModelConfig config;
  AblationConfig ablation;
  ParamStore<T> params;
  DepthField<T> depth;
  BrdfField<T> brdf;
  /// Used instead of the BRDF network when ablation.no_brdf is set.
  std::array<double, 3> albedo{1.0, 1.0, 1.0};

  /// Registers and initializes all parameters deterministically from `seed`.
  static ReconstructionModel create(const CameraModel& cam, const LightRig& rig, const ModelConfig& config,
                                    const AblationConfig& ablation, std::uint64_t seed);

  /// Reflectance of channel c for given features in the active mode.
  double reflectance(int channel, const BrdfFeatures<double>& f) const;

  template <typename U>
  ReconstructionModel<U> cast() const;
};

struct ObjectiveStats {
  double loss = 0.0;            // L1 sum (+ optional smoothness)
  double l1 = 0.0;              // L1 sum only
  std::size_t pixels = 0;       // valid pixels in the batch
  std::size_t depth_clamps = 0; // depths raised to the floor
};

/// L1 photometric objective over a set of pixels, with its exact gradient.
///
/// Pixels are processed in chunks of fixed size; each chunk writes into its
/// own gradient buffer and buffers are summed in chunk order in
/// reproducible mode, so the result does not depend on the thread count.
template <typename T>
class PhotometricObjective {
 public:
  PhotometricObjective(const ReconstructionModel<T>& model, const Image& captured, std::vector<std::uint8_t> mask,
                       const OptimizerConfig& config);
  ~PhotometricObjective();
  PhotometricObjective(const PhotometricObjective&) = delete;
  PhotometricObjective& operator=(const PhotometricObjective&) = delete;

  /// Loss over `pixels` (indices into the image); if `grad` is non-null it
  /// is overwritten with d loss / d params (flat layout).
  ObjectiveStats evaluate(const ReconstructionModel<T>& model, std::span<const std::uint32_t> pixels,
                          std::vector<T>* grad);

  /// Per-channel least-squares albedo sum(I g) / sum(g^2) under the current
  /// geometry. Channels with sum(g^2) = 0 fall back to 1 with a warning.
  std::array<double, 3> least_squares_albedo(const ReconstructionModel<T>& model,
                                             std::span<const std::uint32_t> pixels);

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  std::vector<std::uint32_t> valid_pixels() const;

 private:
  struct Worker;
  struct ChunkResult {
    ObjectiveStats stats;
    std::array<double, 3> ig{};  // sum I g per channel
    std::array<double, 3> gg{};  // sum g^2 per channel
  };
  enum class Mode { kLoss, kGradient, kAlbedo };

  void run_chunk(const ReconstructionModel<T>& model, Worker& w, std::span<const std::uint32_t> pixels, Mode mode,
                 T* grad, ChunkResult& out) const;
  std::vector<ChunkResult> run(const ReconstructionModel<T>& model, std::span<const std::uint32_t> pixels, Mode mode,
                               std::vector<T>* grad);

  const Image& captured_;
  std::vector<std::uint8_t> mask_;
  OptimizerConfig config_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::vector<std::vector<T>> buffers_;
};

/// First-order adaptive-moment update with per-group step sizes.
template <typename T>
class Adam {
 public:
  struct Group {
    std::size_t offset;
    std::size_t size;
    double lr;
  };

  Adam(std::size_t parameters, std::vector<Group> groups, double beta1, double beta2, double epsilon);

  /// One update with all group step sizes multiplied by `lr_scale`.
  void step(std::vector<T>& params, const std::vector<T>& grad, double lr_scale);

  long iteration() const { return t_; }
  const std::vector<T>& first_moment() const { return m_; }
  const std::vector<T>& second_moment() const { return v_; }

 private:
  std::vector<Group> groups_;
  double b1_, b2_, eps_;
  std::vector<T> m_, v_;
  long t_ = 0;
};

/// Multiplier of the base step size at an iteration under cosine decay.
double cosine_decay(int iteration, int total, double min_fraction);

struct HistoryEntry {
  int iteration = 0;
  double sum_l1 = 0.0;
  double mean_l1 = 0.0;
  double wall_time_s = 0.0;
};

struct OptimizeResult {
  ReconstructionModel<float> model;
  std::vector<HistoryEntry> history;
  std::size_t depth_clamps = 0;
  int iterations_run = 0;
  bool stopped_early = false;
};

struct OptimizeHooks {
  /// Called with the last finite model and the history before a DivergenceError is thrown.
  std::function<void(const ReconstructionModel<float>&, const std::vector<HistoryEntry>&)> on_divergence;
  /// Called after every iteration.
  std::function<void(const HistoryEntry&)> on_iteration;
};

/// Jointly fits the depth field and the BRDF to one image by minimizing the
/// L1 photometric loss.
OptimizeResult optimize(const Image& captured, const CameraModel& cam, const LightRig& rig,
                        const ModelConfig& model_config, const AblationConfig& ablation,
                        const OptimizerConfig& config, const OptimizeHooks& hooks = {});

/// Same loop with the BRDF replaced by a least-squares albedo re-estimated every epoch.
OptimizeResult ablate_no_brdf(const Image& captured, const CameraModel& cam, const LightRig& rig,
                              const ModelConfig& model_config, const OptimizerConfig& config,
                              const OptimizeHooks& hooks = {});

/// Normals predicted by the depth field at every pixel center; `mask` is copied.
NormalMap predict_normals(const ReconstructionModel<float>& model, const std::vector<std::uint8_t>& mask);

/// One-channel depth image.
Image predict_depth(const ReconstructionModel<float>& model, const std::vector<std::uint8_t>& mask);

/// Image rendered by the model.
Image render_model(const ReconstructionModel<float>& model);

/// Mean over valid pixels of the angle between normals, in degrees.
/// An empty `mask` means the intersection of both maps' masks.
double evaluate_mae(const NormalMap& estimated, const NormalMap& ground_truth,
                    const std::vector<std::uint8_t>& mask = {});

}  // namespace ncps
