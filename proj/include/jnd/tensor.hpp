#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace jnd {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 access for [H, W, C] pixel grids.
  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return (y * shape_[1] + x) * shape_[2] + c;
  }
  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }

  // Same data, new extents. Throws DimensionError when the element count differs.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// An H x W x C pixel grid with intensities nominally in [0, 255].
using Image = Tensor;

Image make_image(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);

// Throws DimensionError naming `what` unless the two shapes agree.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
// Throws DimensionError unless t is rank 3.
void require_image(const Tensor& t, const char* what);

}  // namespace jnd
