#pragma once

// Forward and backward kernels for the layers of the desk classifier. These
// are plain functions over Tensors; autodiff.hpp records them on a tape.

#include <cstddef>

#include "jnd/tensor.hpp"

namespace jnd::ops {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Output extent along one axis: floor((in + 2*padding - k) / stride) + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding);

// Cross-correlation of input [H, W, C] with kernels [K, kh, kw, C] -> [Ho, Wo, K].
Tensor conv2d(const Tensor& input, const Tensor& kernels, Conv2dGeometry geom);

struct Conv2dGrads {
  Tensor input;    // empty unless requested
  Tensor kernels;  // empty unless requested
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, Conv2dGeometry geom,
                            const Tensor& grad_output, bool want_input, bool want_kernels);

// Adds bias[k] to every element whose last index is k.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);
// Sums grad over all but the last axis.
Tensor channel_bias_backward(const Tensor& grad_output);

// [M, K] x [K, N] -> [M, N]
Tensor matmul(const Tensor& a, const Tensor& b);
struct MatmulGrads {
  Tensor a;
  Tensor b;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_output, bool want_a,
                            bool want_b);

// weights [out, in] applied to a flat vector of length in, plus bias [out].
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);
struct DenseGrads {
  Tensor x;
  Tensor weights;
  Tensor bias;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_output, bool want_x,
                          bool want_params);

Tensor relu(const Tensor& input);
// Subgradient at exactly zero is 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

// Non-overlapping 2x2 max pooling on [H, W, C]; odd trailing rows/cols are dropped.
Tensor max_pool2x2(const Tensor& input);
// Routes each window's gradient to its first maximal element.
Tensor max_pool2x2_backward(const Tensor& input, const Tensor& grad_output);

// Max-shifted softmax over a flat vector.
Tensor softmax(const Tensor& logits);

// -log softmax(logits)[label], computed via log-sum-exp.
double cross_entropy(const Tensor& logits, std::size_t label);
// softmax(logits) - onehot(label)
Tensor cross_entropy_backward(const Tensor& logits, std::size_t label);

}  // namespace jnd::ops
