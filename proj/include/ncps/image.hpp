#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ncps/error.hpp"

namespace ncps {

/// Row-major float image with interleaved channels and a per-pixel validity mask.
/// Radiance is linear (no gamma anywhere in the pipeline).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;
  std::vector<std::uint8_t> mask;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill), mask(std::size_t(w) * h, 1) {}

  std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
  std::size_t index(int row, int col) const { return std::size_t(row) * width + col; }

  float& at(std::size_t pixel, int c) { return data[pixel * channels + std::size_t(c)]; }
  float at(std::size_t pixel, int c) const { return data[pixel * channels + std::size_t(c)]; }

  std::array<float, 3> rgb(std::size_t pixel) const {
    return {at(pixel, 0), at(pixel, 1), at(pixel, 2)};
  }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }

  /// Throws DataError unless every valid sample is finite and non-negative.
  void validate_radiance() const;
};

/// Captured and rendered images share a layout: three linear channels.
using CapturedImage = Image;
using RenderedImage = Image;

}  // namespace ncps
