#include "jnd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "jnd/error.hpp"
#include "jnd/simd/kernels.hpp"

namespace jnd::ops {
namespace {

struct ConvDims {
  std::size_t h, w, c;    // input
  std::size_t k, kh, kw;  // kernels
  std::size_t ho, wo;     // output
  std::size_t patch;      // kh * kw * c
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, Conv2dGeometry geom) {
  if (input.rank() != 3) throw DimensionError("conv2d: input must be [H, W, C], got " + shape_string(input.shape()));
  if (kernels.rank() != 4) {
    throw DimensionError("conv2d: kernels must be [K, kh, kw, C], got " + shape_string(kernels.shape()));
  }
  if (geom.stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvDims d{};
  d.h = input.dim(0);
  d.w = input.dim(1);
  d.c = input.dim(2);
  d.k = kernels.dim(0);
  d.kh = kernels.dim(1);
  d.kw = kernels.dim(2);
  if (kernels.dim(3) != d.c) {
    throw DimensionError("conv2d: kernel channels " + std::to_string(kernels.dim(3)) + " != input channels " +
                         std::to_string(d.c));
  }
  if (d.kh > d.h + 2 * geom.padding || d.kw > d.w + 2 * geom.padding) {
    throw DimensionError("conv2d: kernel " + shape_string(kernels.shape()) + " larger than padded input " +
                         shape_string(input.shape()));
  }
  d.ho = conv_output_extent(d.h, d.kh, geom.stride, geom.padding);
  d.wo = conv_output_extent(d.w, d.kw, geom.stride, geom.padding);
  d.patch = d.kh * d.kw * d.c;
  return d;
}

// Row p of the result holds the (zero-padded) receptive field of output pixel p,
// laid out [i, j, c] to match one kernel's memory order.
std::vector<double> im2col(const Tensor& input, const ConvDims& d, Conv2dGeometry geom) {
  std::vector<double> cols(d.ho * d.wo * d.patch, 0.0);
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  for (std::size_t oy = 0; oy < d.ho; ++oy) {
    for (std::size_t ox = 0; ox < d.wo; ++ox) {
      double* row = cols.data() + (oy * d.wo + ox) * d.patch;
      for (std::size_t i = 0; i < d.kh; ++i) {
        const auto y = static_cast<std::ptrdiff_t>(oy * geom.stride + i) - pad;
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(d.h)) continue;
        for (std::size_t j = 0; j < d.kw; ++j) {
          const auto x = static_cast<std::ptrdiff_t>(ox * geom.stride + j) - pad;
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(d.w)) continue;
          const double* src = input.data().data() + input.index(static_cast<std::size_t>(y), static_cast<std::size_t>(x), 0);
          std::copy(src, src + d.c, row + (i * d.kw + j) * d.c);
        }
      }
    }
  }
  return cols;
}

void col2im_accumulate(const std::vector<double>& cols, const ConvDims& d, Conv2dGeometry geom, Tensor& out) {
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  for (std::size_t oy = 0; oy < d.ho; ++oy) {
    for (std::size_t ox = 0; ox < d.wo; ++ox) {
      const double* row = cols.data() + (oy * d.wo + ox) * d.patch;
      for (std::size_t i = 0; i < d.kh; ++i) {
        const auto y = static_cast<std::ptrdiff_t>(oy * geom.stride + i) - pad;
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(d.h)) continue;
        for (std::size_t j = 0; j < d.kw; ++j) {
          const auto x = static_cast<std::ptrdiff_t>(ox * geom.stride + j) - pad;
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(d.w)) continue;
          double* dst = &out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), 0);
          const double* src = row + (i * d.kw + j) * d.c;
          for (std::size_t c = 0; c < d.c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

void require_vector(const Tensor& t, const char* what) {
  if (t.empty()) throw DimensionError(std::string(what) + ": empty tensor");
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - k) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input, kernels, geom);
  const std::vector<double> cols = im2col(input, d, geom);
  Tensor out({d.ho, d.wo, d.k});
  const double* ker = kernels.data().data();
  double* o = out.data().data();
  for (std::size_t p = 0; p < d.ho * d.wo; ++p) {
    const double* patch = cols.data() + p * d.patch;
    for (std::size_t k = 0; k < d.k; ++k) o[p * d.k + k] = simd::dot(patch, ker + k * d.patch, d.patch);
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, Conv2dGeometry geom,
                            const Tensor& grad_output, bool want_input, bool want_kernels) {
  const ConvDims d = conv_dims(input, kernels, geom);
  if (grad_output.shape() != Shape{d.ho, d.wo, d.k}) {
    throw DimensionError("conv2d_backward: grad shape " + shape_string(grad_output.shape()));
  }
  Conv2dGrads grads;
  const double* g = grad_output.data().data();
  const double* ker = kernels.data().data();
  if (want_kernels) {
    const std::vector<double> cols = im2col(input, d, geom);
    grads.kernels = Tensor(kernels.shape());
    double* gk = grads.kernels.data().data();
    for (std::size_t p = 0; p < d.ho * d.wo; ++p) {
      const double* patch = cols.data() + p * d.patch;
      for (std::size_t k = 0; k < d.k; ++k) {
        const double gv = g[p * d.k + k];
        if (gv != 0.0) simd::axpy(gv, patch, gk + k * d.patch, d.patch);
      }
    }
  }
  if (want_input) {
    std::vector<double> dcols(d.ho * d.wo * d.patch, 0.0);
    for (std::size_t p = 0; p < d.ho * d.wo; ++p) {
      double* drow = dcols.data() + p * d.patch;
      for (std::size_t k = 0; k < d.k; ++k) {
        const double gv = g[p * d.k + k];
        if (gv != 0.0) simd::axpy(gv, ker + k * d.patch, drow, d.patch);
      }
    }
    grads.input = Tensor(input.shape());
    col2im_accumulate(dcols, d, geom, grads.input);
  }
  return grads;
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  if (input.rank() == 0 || bias.rank() != 1 || bias.dim(0) != input.shape().back()) {
    throw DimensionError("add_channel_bias: bias " + shape_string(bias.shape()) + " vs input " +
                         shape_string(input.shape()));
  }
  Tensor out = input;
  const std::size_t c = bias.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % c];
  return out;
}

Tensor channel_bias_backward(const Tensor& grad_output) {
  const std::size_t c = grad_output.shape().back();
  Tensor g({c});
  for (std::size_t i = 0; i < grad_output.size(); ++i) g[i % c] += grad_output[i];
  return g;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data().data() + i * n;
    for (std::size_t k = 0; k < kk; ++k) {
      const double av = a[i * kk + k];
      if (av != 0.0) simd::axpy(av, b.data().data() + k * n, row, n);
    }
  }
  return out;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_output, bool want_a,
                            bool want_b) {
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  if (grad_output.shape() != Shape{m, n}) throw DimensionError("matmul_backward: grad shape mismatch");
  MatmulGrads grads;
  if (want_a) {
    // dA = G B^T : row i, col k = dot(G_i, B_k)
    grads.a = Tensor(a.shape());
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < kk; ++k) {
        grads.a[i * kk + k] = simd::dot(grad_output.data().data() + i * n, b.data().data() + k * n, n);
      }
    }
  }
  if (want_b) {
    // dB = A^T G : row k += a[i,k] * G_i
    grads.b = Tensor(b.shape());
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < kk; ++k) {
        const double av = a[i * kk + k];
        if (av != 0.0) simd::axpy(av, grad_output.data().data() + i * n, grads.b.data().data() + k * n, n);
      }
    }
  }
  return grads;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2 || weights.dim(1) != x.size() || bias.size() != weights.dim(0)) {
    throw DimensionError("dense: weights " + shape_string(weights.shape()) + ", input " +
                         shape_string(x.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const std::size_t out_n = weights.dim(0), in_n = weights.dim(1);
  Tensor out({out_n});
  for (std::size_t o = 0; o < out_n; ++o) {
    out[o] = simd::dot(weights.data().data() + o * in_n, x.data().data(), in_n) + bias[o];
  }
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_output, bool want_x,
                          bool want_params) {
  const std::size_t out_n = weights.dim(0), in_n = weights.dim(1);
  if (grad_output.size() != out_n) throw DimensionError("dense_backward: grad shape mismatch");
  DenseGrads grads;
  if (want_x) {
    grads.x = Tensor(x.shape());
    for (std::size_t o = 0; o < out_n; ++o) {
      simd::axpy(grad_output[o], weights.data().data() + o * in_n, grads.x.data().data(), in_n);
    }
  }
  if (want_params) {
    grads.weights = Tensor(weights.shape());
    for (std::size_t o = 0; o < out_n; ++o) {
      simd::axpy(grad_output[o], x.data().data(), grads.weights.data().data() + o * in_n, in_n);
    }
    grads.bias = Tensor({out_n}, std::vector<double>(grad_output.values()));
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  require_same_shape(input, grad_output, "relu_backward");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  return g;
}

Tensor max_pool2x2(const Tensor& input) {
  require_image(input, "max_pool2x2");
  const std::size_t ho = input.dim(0) / 2, wo = input.dim(1) / 2, c = input.dim(2);
  if (ho == 0 || wo == 0) throw DimensionError("max_pool2x2: input " + shape_string(input.shape()) + " too small");
  Tensor out({ho, wo, c});
  for (std::size_t y = 0; y < ho; ++y) {
    for (std::size_t x = 0; x < wo; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        out.at(y, x, k) = std::max(std::max(input.at(2 * y, 2 * x, k), input.at(2 * y, 2 * x + 1, k)),
                                   std::max(input.at(2 * y + 1, 2 * x, k), input.at(2 * y + 1, 2 * x + 1, k)));
      }
    }
  }
  return out;
}

Tensor max_pool2x2_backward(const Tensor& input, const Tensor& grad_output) {
  require_image(input, "max_pool2x2_backward");
  const std::size_t ho = input.dim(0) / 2, wo = input.dim(1) / 2, c = input.dim(2);
  if (grad_output.shape() != Shape{ho, wo, c}) throw DimensionError("max_pool2x2_backward: grad shape mismatch");
  Tensor g(input.shape());
  for (std::size_t y = 0; y < ho; ++y) {
    for (std::size_t x = 0; x < wo; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        std::size_t by = 2 * y, bx = 2 * x;
        double best = input.at(by, bx, k);
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const double v = input.at(2 * y + dy, 2 * x + dx, k);
            if (v > best) {
              best = v;
              by = 2 * y + dy;
              bx = 2 * x + dx;
            }
          }
        }
        g.at(by, bx, k) += grad_output.at(y, x, k);
      }
    }
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  require_vector(logits, "softmax");
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor p(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (double& v : p.data()) v /= total;
  return p;
}

double cross_entropy(const Tensor& logits, std::size_t label) {
  require_vector(logits, "cross_entropy");
  if (label >= logits.size()) throw DimensionError("cross_entropy: label out of range");
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  double total = 0.0;
  for (double z : logits.data()) total += std::exp(z - mx);
  return mx + std::log(total) - logits[label];
}

Tensor cross_entropy_backward(const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) throw DimensionError("cross_entropy: label out of range");
  Tensor g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

}  // namespace jnd::ops
