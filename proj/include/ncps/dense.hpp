#pragma once

#include <Eigen/Core>
#include <random>
#include <string>
#include <vector>

#include "ncps/params.hpp"

namespace ncps {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
using MatMap = Eigen::Map<Mat<T>>;

template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

enum class Activation { kTanh, kSoftplus };

/// Layer-wise workspace kept between forward and backward.
template <typename T>
struct MlpWorkspace {
  std::vector<Mat<T>> act;  // act[0] is the input, act.back() the (linear) output
  Mat<T> grad;              // scratch for the backward sweep
};

/// Plain dense network with a smooth hidden activation and a linear output layer.
/// Columns of every matrix are samples.
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore<T>& store, const std::string& group, const std::string& prefix, int inputs,
      std::vector<int> hidden, int outputs, Activation activation);

  int inputs() const { return widths_.front(); }
  int outputs() const { return widths_.back(); }
  int layers() const { return int(weights_.size()); }

  /// Xavier-uniform hidden layers; the output layer is drawn with its bound
  /// multiplied by `output_scale` (0 gives an exactly zero output layer).
  void initialize(ParamStore<T>& store, std::mt19937_64& rng, double output_scale) const;

  /// Forward pass; the result is ws.act.back().
  void forward(const ParamStore<T>& store, const Mat<T>& input, MlpWorkspace<T>& ws) const;

  /// Accumulates parameter gradients into `grad` (flat store layout). When
  /// `grad_input` is non-null it receives d loss / d input.
  void backward(const ParamStore<T>& store, MlpWorkspace<T>& ws, const Mat<T>& grad_output, T* grad,
                Mat<T>* grad_input) const;

  std::size_t weight_id(int layer) const { return weights_[std::size_t(layer)]; }
  std::size_t bias_id(int layer) const { return biases_[std::size_t(layer)]; }

 private:
  std::vector<int> widths_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
  Activation activation_ = Activation::kTanh;
};

}  // namespace ncps
