#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ncps/dense.hpp"
#include "ncps/image.hpp"
#include "ncps/params.hpp"

namespace ncps {

struct CcmConfig {
  std::vector<int> hidden{16, 16};
  int iterations = 3000;
  double lr = 5e-3;
  double lr_min_fraction = 0.01;
  /// Samples per step; 0 uses every training sample.
  int batch_size = 4096;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Pixel-wise RGB -> RGB correction
///   T(x) = max(A x + b + mlp(x), 0)
/// with A starting at the identity and the network's last layer at zero,
/// so an untrained corrector passes its input through unchanged.
class CrosstalkCorrector {
 public:
  CrosstalkCorrector() : CrosstalkCorrector(CcmConfig{}) {}
  explicit CrosstalkCorrector(const CcmConfig& config);

  std::array<double, 3> apply(const std::array<double, 3>& rgb) const;

  /// Batched: `x` is 3 x n. Keeps what backward() needs in `ws`.
  struct Workspace {
    MlpWorkspace<double> mlp;
    Mat<double> input, pre;
  };
  void forward(const Mat<double>& x, Workspace& ws, Mat<double>& out) const;
  /// Accumulates d loss / d params given d loss / d out.
  void backward(Workspace& ws, const Mat<double>& grad_out, double* grad) const;

  const CcmConfig& config() const { return config_; }
  ParamStore<double>& params() { return params_; }
  const ParamStore<double>& params() const { return params_; }

 private:
  CcmConfig config_;
  ParamStore<double> params_;
  Mlp<double> mlp_;
  std::size_t linear_weight_ = 0, linear_bias_ = 0;
};

struct CcmReport {
  std::vector<double> loss_history;    // mean L1 per training step
  std::size_t train_samples = 0;
  std::size_t holdout_samples = 0;
  double holdout_off_energy = 0.0;     // sum of squared off-channel outputs
  double holdout_nominal_energy = 0.0; // sum of squared nominal-channel targets
  double holdout_residual_ratio = 0.0; // off / nominal
};

struct CcmTraining {
  CrosstalkCorrector corrector;
  CcmReport report;
};

/// Fits the corrector on three single-LED captures. `baselines[c]` was
/// captured with only LED c on and `targets[c]` is its crosstalk-free
/// version with energy in channel c only. Samples are (capture, pixel)
/// pairs; a fixed fraction is held out to measure the off-channel residual.
CcmTraining train_ccm(const std::array<Image, 3>& baselines, const std::array<Image, 3>& targets,
                      const CcmConfig& config);

/// Off-channel residual of the corrector on the given (capture, pixel)
/// samples; an empty list means every sample.
CcmReport ccm_residual(const CrosstalkCorrector& corrector, const std::array<Image, 3>& baselines,
                       const std::array<Image, 3>& targets,
                       const std::vector<std::pair<int, std::uint32_t>>& samples = {});

/// Applies the corrector to every pixel; the mask is kept.
Image apply_ccm(const CrosstalkCorrector& corrector, const Image& img);

}  // namespace ncps
