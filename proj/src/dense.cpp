#include "ncps/dense.hpp"

#include <cmath>

namespace ncps {

template <typename T>
Mlp<T>::Mlp(ParamStore<T>& store, const std::string& group, const std::string& prefix, int inputs,
            std::vector<int> hidden, int outputs, Activation activation)
    : activation_(activation) {
  widths_.push_back(inputs);
  for (int h : hidden) widths_.push_back(h);
  widths_.push_back(outputs);
  for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
    const std::string tag = prefix + ".layer" + std::to_string(k);
    weights_.push_back(store.add(group, tag + ".weight", {widths_[k + 1], widths_[k]}));
    biases_.push_back(store.add(group, tag + ".bias", {widths_[k + 1]}));
  }
}

template <typename T>
void Mlp<T>::initialize(ParamStore<T>& store, std::mt19937_64& rng, double output_scale) const {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double fan_in = widths_[k], fan_out = widths_[k + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    if (k + 1 == weights_.size()) bound *= output_scale;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& w : store.values(weights_[k])) w = bound > 0 ? T(dist(rng)) : T(0);
    for (T& b : store.values(biases_[k])) b = T(0);
  }
}

namespace {

template <typename T>
T softplus(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

}  // namespace

template <typename T>
void Mlp<T>::forward(const ParamStore<T>& store, const Mat<T>& input, MlpWorkspace<T>& ws) const {
  const std::size_t nl = weights_.size();
  ws.act.resize(nl + 1);
  ws.act[0] = input;
  for (std::size_t k = 0; k < nl; ++k) {
    // Owned copy: Eigen picks its vectorized path from the address, and parameter
    // storage is not aligned, so products over a Map would round differently run to run.
    const Mat<T> w = ConstMatMap<T>(store.values(weights_[k]).data(), widths_[k + 1], widths_[k]);
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(store.values(biases_[k]).data(),
                                                                   widths_[k + 1]);
    Mat<T>& out = ws.act[k + 1];
    out.noalias() = w * ws.act[k];
    out.colwise() += b;
    if (k + 1 < nl) {
      // Hidden activations are stored post-nonlinearity; the pre-activation
      // is recoverable for tanh, and kept implicitly for softplus via sigmoid.
      if (activation_ == Activation::kTanh) {
        out = out.array().tanh().matrix();
      } else {
        out = out.unaryExpr([](T x) { return softplus(x); });
      }
    }
  }
}

template <typename T>
void Mlp<T>::backward(const ParamStore<T>& store, MlpWorkspace<T>& ws, const Mat<T>& grad_output,
                      T* grad, Mat<T>* grad_input) const {
  const std::size_t nl = weights_.size();
  Mat<T> g = grad_output;
  for (std::size_t k = nl; k-- > 0;) {
    const Mat<T> w = ConstMatMap<T>(store.values(weights_[k]).data(), widths_[k + 1], widths_[k]);
    if (k + 1 < nl) {
      const Mat<T>& a = ws.act[k + 1];
      if (activation_ == Activation::kTanh) {
        g.array() *= (T(1) - a.array().square());
      } else {
        // a = softplus(x) => d/dx = sigmoid(x) = 1 - exp(-a)
        g.array() *= (T(1) - (-a.array()).exp());
      }
    }
    MatMap<T> gw(grad + store.info(weights_[k]).offset, widths_[k + 1], widths_[k]);
    gw += Mat<T>(g * ws.act[k].transpose());
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(grad + store.info(biases_[k]).offset, widths_[k + 1]);
    gb += Mat<T>(g.rowwise().sum());
    if (k > 0 || grad_input) {
      ws.grad.noalias() = w.transpose() * g;
      g.swap(ws.grad);
    }
  }
  if (grad_input) *grad_input = std::move(g);
}

template class Mlp<float>;
template class Mlp<double>;

}  // namespace ncps
