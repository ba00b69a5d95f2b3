#include "jnd/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "jnd/error.hpp"

namespace jnd {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " holds " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Image make_image(std::size_t height, std::size_t width, std::size_t channels, double fill) {
  return Image({height, width, channels}, fill);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw DimensionError(std::string(what) + ": expected an HxWxC image, got " +
                         shape_string(t.shape()));
  }
}

}  // namespace jnd
