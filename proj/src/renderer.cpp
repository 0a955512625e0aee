#include "ncps/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ncps {

void Image::validate_radiance() const {
  if (data.size() != pixel_count() * std::size_t(channels) || mask.size() != pixel_count())
    throw DataError("image: storage does not match dimensions");
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    if (!mask[i]) continue;
    for (int c = 0; c < channels; ++c) {
      const float v = at(i, c);
      if (!std::isfinite(v) || v < 0.0f)
        throw DataError("image: pixel " + std::to_string(i) + " holds a negative or non-finite radiance");
    }
  }
}

LossValue photometric_loss(const Image& captured, const Image& rendered, const std::vector<std::uint8_t>& mask) {
  if (!captured.same_shape(rendered)) throw DataError("photometric_loss: image dimensions differ");
  if (!mask.empty() && mask.size() != captured.pixel_count())
    throw DataError("photometric_loss: mask size does not match the images");
  LossValue loss;
  for (std::size_t i = 0; i < captured.pixel_count(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    for (int c = 0; c < captured.channels; ++c)
      loss.sum += std::abs(double(captured.at(i, c)) - double(rendered.at(i, c)));
    ++loss.pixels;
  }
  loss.mean = loss.pixels ? loss.sum / double(loss.pixels) : 0.0;
  return loss;
}

std::vector<std::uint8_t> loss_mask(const Image& captured, double threshold) {
  std::vector<std::uint8_t> mask(captured.pixel_count(), 0);
  for (std::size_t i = 0; i < captured.pixel_count(); ++i) {
    if (!captured.mask.empty() && !captured.mask[i]) continue;
    float m = 0.0f;
    for (int c = 0; c < captured.channels; ++c) m = std::max(m, captured.at(i, c));
    mask[i] = m >= threshold ? 1 : 0;
  }
  return mask;
}

}  // namespace ncps
