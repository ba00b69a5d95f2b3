#include "jnd/regularizers.hpp"

#include <algorithm>

#include "jnd/error.hpp"

namespace jnd {

RegularizerValue br_loss(const Image& image) {
  require_image(image, "br_loss");
  const double n = static_cast<double>(image.size());
  RegularizerValue out{0.0, Image::zeros_like(image)};
  double total = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double p = image[i];
    if (p < kPixelMin) {
      total += kPixelMin - p;
      out.gradient[i] = -1.0 / n;
    } else if (p > kPixelMax) {
      total += p - kPixelMax;
      out.gradient[i] = 1.0 / n;
    }
  }
  out.value = total / n;
  return out;
}

RegularizerValue tv_loss(const Image& image) {
  require_image(image, "tv_loss");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h * w < 2) throw InputError("tv_loss: image " + shape_string(image.shape()) + " has no neighbouring pixels");
  const double n = static_cast<double>(image.size());
  RegularizerValue out{0.0, Image::zeros_like(image)};
  double total = 0.0;
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      for (std::size_t k = 0; k < c; ++k) {
        const double x = image.at(v, u, k);
        if (u + 1 < w) {
          const double d = image.at(v, u + 1, k) - x;
          total += d * d;
          out.gradient.at(v, u + 1, k) += 2.0 * d / n;
          out.gradient.at(v, u, k) -= 2.0 * d / n;
        }
        if (v + 1 < h) {
          const double d = image.at(v + 1, u, k) - x;
          total += d * d;
          out.gradient.at(v + 1, u, k) += 2.0 * d / n;
          out.gradient.at(v, u, k) -= 2.0 * d / n;
        }
      }
    }
  }
  out.value = total / n;
  return out;
}

Image clamp_to_range(Image image) {
  for (double& v : image.data()) v = std::clamp(v, kPixelMin, kPixelMax);
  return image;
}

}  // namespace jnd
