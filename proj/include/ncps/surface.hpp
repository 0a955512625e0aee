#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ncps/dense.hpp"
#include "ncps/geometry.hpp"
#include "ncps/params.hpp"

namespace ncps {

struct HashEncodingConfig {
  int levels = 8;
  int features_per_level = 2;
  int log2_table_size = 15;
  int base_resolution = 16;
  double growth_factor = 1.5;
  double init_range = 1e-4;

  void validate() const;
};

/// Two-dimensional multi-resolution hash encoding.
///
/// Level l has a grid of resolution floor(base * growth^l) cells per axis.
/// Levels whose (res+1)^2 vertices fit in the table are indexed densely;
/// finer levels use the spatial hash (x * 1) xor (y * 2654435761) mod T.
/// Features are bilinearly interpolated from the four cell corners.
template <typename T>
class HashEncoding {
 public:
  HashEncoding() = default;
  HashEncoding(const HashEncodingConfig& config, ParamStore<T>& store, const std::string& group);

  int output_dim() const { return config_.levels * config_.features_per_level; }
  int levels() const { return config_.levels; }
  int features() const { return config_.features_per_level; }
  int resolution(int level) const { return levels_[std::size_t(level)].resolution; }
  std::size_t entries(int level) const { return levels_[std::size_t(level)].entries; }
  bool dense(int level) const { return levels_[std::size_t(level)].dense; }
  std::size_t table_id(int level) const { return levels_[std::size_t(level)].table; }
  const HashEncodingConfig& config() const { return config_; }

  /// Table row addressed by grid vertex (ix, iy) at a level.
  std::size_t vertex_index(int level, std::uint32_t ix, std::uint32_t iy) const;

  void initialize(ParamStore<T>& store, std::mt19937_64& rng) const;

  /// Encodes one point of the unit square. Out-of-domain input is clamped
  /// with a warning. When `d_ds` / `d_dt` are given they receive the
  /// derivative of the encoding with respect to the two unit coordinates.
  std::vector<T> encode(const ParamStore<T>& store, std::array<double, 2> p, std::vector<T>* d_ds = nullptr,
                        std::vector<T>* d_dt = nullptr) const;

  /// Batched encoding. `out` is output_dim x 3n: columns [0,n) hold the
  /// features, [n,2n) their derivative along s scaled by `ds_scale`,
  /// [2n,3n) along t scaled by `dt_scale` (chain rule to pixel units).
  void forward(const ParamStore<T>& store, std::span<const std::array<double, 2>> points, T ds_scale,
               T dt_scale, Mat<T>& out) const;

  /// Scatters d loss / d (features, tangents) back into the tables.
  void backward(std::span<const std::array<double, 2>> points, T ds_scale, T dt_scale, const Mat<T>& grad_out,
                T* grad) const;

 private:
  struct Level {
    int resolution = 0;
    std::size_t entries = 0;
    bool dense = false;
    std::size_t table = 0;
    std::size_t offset = 0;
  };

  struct Corner {
    std::size_t row[4];
    T w[4];    // bilinear weights
    T ws[4];   // d w / d s
    T wt[4];   // d w / d t
  };
  Corner corners(int level, std::array<double, 2> p) const;

  HashEncodingConfig config_;
  std::vector<Level> levels_;
};

struct SirenConfig {
  std::vector<int> hidden{64, 64, 64};
  double omega0 = 30.0;
  /// Multiplier on the output layer's initialization bound; small values start the raw output near 0.
  double output_scale = 0.01;

  void validate() const;
};

/// Sinusoidal network that propagates two spatial tangents alongside the
/// values. Every activation matrix is width x 3n laid out as
/// [values | d/du | d/dv].
template <typename T>
class Siren {
 public:
  struct Workspace {
    std::vector<Mat<T>> act;  // act[0] = input block, act[k] = output of layer k
    std::vector<Mat<T>> cosine;       // cos of hidden pre-activations, width x n
    std::vector<Mat<T>> pre_tangent;  // omega * pre-activation tangents, width x 2n
    Mat<T> scratch;
  };

  Siren() = default;
  Siren(const SirenConfig& config, ParamStore<T>& store, const std::string& group, int inputs);

  void initialize(ParamStore<T>& store, std::mt19937_64& rng) const;

  /// Output is 1 x 3n: [raw | d raw/du | d raw/dv].
  const Mat<T>& forward(const ParamStore<T>& store, const Mat<T>& input, Workspace& ws) const;

  /// `grad_output` is 1 x 3n; `grad_input` receives inputs x 3n.
  void backward(const ParamStore<T>& store, Workspace& ws, const Mat<T>& grad_output, T* grad,
                Mat<T>& grad_input) const;

  const SirenConfig& config() const { return config_; }
  int layer_count() const { return int(weights_.size()); }
  std::size_t weight_id(int k) const { return weights_[std::size_t(k)]; }
  std::size_t bias_id(int k) const { return biases_[std::size_t(k)]; }

 private:
  T omega(std::size_t k) const { return k == 0 ? T(config_.omega0) : T(1); }

  SirenConfig config_;
  std::vector<int> widths_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

struct DepthConfig {
  double z0_mm = 35.0;
  double scale_mm = 5.0;
  double min_depth_mm = 1.0;

  void validate() const;
};

struct DepthSample {
  double z = 0.0;
  double dz_du = 0.0;
  double dz_dv = 0.0;
};

/// Neural depth field z(p) = z0 + s * siren(hash(p)).
///
/// Pixels map into the unit square over the full image rectangle, so the
/// spatial gradient picks up factors 1/width and 1/height on the way back
/// to pixel units.
template <typename T>
class DepthField {
 public:
  struct Workspace {
    Mat<T> encoded;
    typename Siren<T>::Workspace siren;
    Mat<T> grad_raw;
    Mat<T> grad_encoded;
    std::vector<std::array<double, 2>> points;
  };

  DepthField() = default;
  DepthField(const CameraModel& cam, const HashEncodingConfig& hash, const SirenConfig& siren,
             const DepthConfig& depth, ParamStore<T>& store);

  void initialize(ParamStore<T>& store, std::mt19937_64& rng) const;

  /// Evaluates z and its pixel-space gradient for a batch. Depths below the
  /// floor are clamped (gradient passes through); the number of clamped
  /// pixels is returned.
  std::size_t evaluate(const ParamStore<T>& store, std::span<const PixelCoord> pixels, Workspace& ws,
                       std::vector<T>& z, std::vector<T>& dz_du, std::vector<T>& dz_dv) const;

  /// Back-propagates d loss / d (z, dz/du, dz/dv) from the last evaluate().
  void backward(const ParamStore<T>& store, Workspace& ws, std::span<const T> g_z, std::span<const T> g_du,
                std::span<const T> g_dv, T* grad) const;

  DepthSample depth(const ParamStore<T>& store, const PixelCoord& p) const;
  Vec3d normal(const ParamStore<T>& store, const PixelCoord& p) const;

  const CameraModel& camera() const { return cam_; }
  const HashEncoding<T>& encoding() const { return encoding_; }
  const Siren<T>& siren() const { return siren_; }
  const DepthConfig& depth_config() const { return depth_; }

 private:
  CameraModel cam_;
  HashEncoding<T> encoding_;
  Siren<T> siren_;
  DepthConfig depth_;
};

}  // namespace ncps
