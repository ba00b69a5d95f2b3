#pragma once

// Penalties that keep an adversarial image looking like an image: a
// bounded-range term for intensities outside [0, 255] and a squared
// total-variation term. Both are normalised by the scalar count H*W*C.

#include "jnd/tensor.hpp"

namespace jnd {

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 255.0;

struct RegularizerValue {
  double value = 0.0;
  Image gradient;
};

// (1/N) sum_p BR(p), BR(p) = -p for p <= 0, p - 255 for p >= 255, 0 otherwise.
// Gradient is -1/N strictly below 0, +1/N strictly above 255, 0 elsewhere.
RegularizerValue br_loss(const Image& image);

// (1/N) sum over interior forward differences along width and height of the
// squared difference. No wrap-around and no padding at the border.
// Throws InputError when the image has no neighbouring pixel pair (1x1).
RegularizerValue tv_loss(const Image& image);

Image clamp_to_range(Image image);

}  // namespace jnd
