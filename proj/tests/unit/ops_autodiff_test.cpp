#include <doctest.h>

#include <cmath>
#include <vector>

#include "jnd/autodiff.hpp"
#include "jnd/error.hpp"
#include "jnd/ops.hpp"
#include "support.hpp"

using namespace jnd;
using test::random_tensor;

namespace {

// Direct nested-loop cross-correlation with zero padding.
Tensor naive_conv(const Tensor& in, const Tensor& k, std::size_t stride, std::size_t pad) {
  const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
  const std::size_t K = k.dim(0), kh = k.dim(1), kw = k.dim(2);
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor out({Ho, Wo, K});
  for (std::size_t oy = 0; oy < Ho; ++oy)
    for (std::size_t ox = 0; ox < Wo; ++ox)
      for (std::size_t f = 0; f < K; ++f) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < kh; ++dy)
          for (std::size_t dx = 0; dx < kw; ++dx)
            for (std::size_t c = 0; c < C; ++c) {
              const long y = static_cast<long>(oy * stride + dy) - static_cast<long>(pad);
              const long x = static_cast<long>(ox * stride + dx) - static_cast<long>(pad);
              if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) continue;
              s += in[(y * W + x) * C + c] * k[((f * kh + dy) * kw + dx) * C + c];
            }
        out[(oy * Wo + ox) * K + f] = s;
      }
  return out;
}

double max_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Scalar function of one tensor, evaluated through a fresh tape.
template <typename Build>
double eval_scalar(const Tensor& x, Build build) {
  Tape tape;
  const Var v = tape.leaf(x, false);
  return tape.value(build(tape, v))[0];
}

template <typename Build>
Tensor tape_gradient(const Tensor& x, Build build) {
  Tape tape;
  const Var v = tape.leaf(x, true);
  const Var out = build(tape, v);
  return tape.backward(out, Tensor({1}, 1.0))[v];
}

template <typename Build>
double fd_relative_error(const Tensor& x, Build build, double h = 1e-5) {
  const Tensor g = tape_gradient(x, build);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (eval_scalar(xp, build) - eval_scalar(xm, build)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-3, std::abs(fd) + std::abs(g[i])));
  }
  return worst;
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("conv2d hand examples") {
    CHECK(ops::conv2d(Tensor({1, 1, 1}, {5.0}), Tensor({1, 1, 1, 1}, {2.0}), {}).values() ==
          std::vector<double>{10.0});
    CHECK(ops::conv2d(Tensor({3, 3, 1}, 1.0), Tensor({1, 3, 3, 1}, 1.0), {}).values() == std::vector<double>{9.0});
  }

  TEST_CASE("conv2d matches the nested-loop reference") {
    Rng rng(1);
    const Tensor in = random_tensor({8, 8, 3}, rng);
    for (auto [stride, pad] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
      const Tensor k = random_tensor({4, 3, 3, 3}, rng);
      CHECK(max_diff(ops::conv2d(in, k, {stride, pad}), naive_conv(in, k, stride, pad)) <= 1e-12);
    }
  }

  TEST_CASE("conv2d rejects mismatched channels") {
    CHECK_THROWS_AS(ops::conv2d(Tensor({4, 4, 3}), Tensor({2, 3, 3, 2}), {}), DimensionError);
  }

  TEST_CASE("matmul, dense and pooling against loops") {
    Rng rng(2);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    const Tensor c = ops::matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 5 + j];
        CHECK(c[i * 5 + j] == doctest::Approx(s).epsilon(1e-12));
      }
    const Tensor x = random_tensor({4}, rng), w = random_tensor({2, 4}, rng), bias = random_tensor({2}, rng);
    const Tensor d = ops::dense(x, w, bias);
    for (std::size_t o = 0; o < 2; ++o) {
      double s = bias[o];
      for (std::size_t i = 0; i < 4; ++i) s += w[o * 4 + i] * x[i];
      CHECK(d[o] == doctest::Approx(s).epsilon(1e-12));
    }
    const Tensor p = ops::max_pool2x2(Tensor({2, 3, 1}, {1, 5, 9, 3, 2, 8}));
    CHECK(p.shape() == Shape{1, 1, 1});
    CHECK(p[0] == 5.0);
  }

  TEST_CASE("softmax and cross-entropy") {
    const Tensor logits({3}, {1000.0, 1000.0, 1000.0});
    const Tensor s = ops::softmax(logits);
    for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(1.0 / 3));
    CHECK(ops::cross_entropy(logits, 1) == doctest::Approx(std::log(3.0)));
    const Tensor g = ops::cross_entropy_backward(Tensor({2}, {0.0, 0.0}), 0);
    CHECK(g[0] == doctest::Approx(-0.5));
    CHECK(g[1] == doctest::Approx(0.5));
  }

  TEST_CASE("relu subgradient at zero is zero") {
    const Tensor g = ops::relu_backward(Tensor({3}, {-1.0, 0.0, 2.0}), Tensor({3}, 1.0));
    CHECK(g.values() == std::vector<double>{0.0, 0.0, 1.0});
  }
}

TEST_SUITE("autodiff") {
  TEST_CASE("identity and sum of squares") {
    const Tensor one({1}, {3.0});
    CHECK(tape_gradient(one, [](Tape& t, Var v) { return t.sum(v); })[0] == 1.0);
    const Tensor x({3}, {1.0, 2.0, 3.0});
    CHECK(tape_gradient(x, [](Tape& t, Var v) { return t.sum(t.square(v)); }).values() ==
          std::vector<double>{2.0, 4.0, 6.0});
  }

  TEST_CASE("seed shape mismatch is rejected") {
    Tape tape;
    const Var v = tape.leaf(Tensor({3}, 1.0), true);
    CHECK_THROWS_AS(tape.backward(v, Tensor({2}, 1.0)), DimensionError);
  }

  TEST_CASE("backward can be called repeatedly on one tape") {
    Tape tape;
    const Var v = tape.leaf(Tensor({2}, {1.0, -2.0}), true);
    const Var sq = tape.square(v);
    const Tensor g1 = tape.backward(sq, Tensor({2}, {1.0, 0.0}))[v];
    const Tensor g2 = tape.backward(sq, Tensor({2}, {0.0, 1.0}))[v];
    CHECK(g1.values() == std::vector<double>{2.0, 0.0});
    CHECK(g2.values() == std::vector<double>{0.0, -4.0});
  }

  TEST_CASE("layer gradients match central differences") {
    Rng rng(3);
    const Tensor kernels = random_tensor({2, 3, 3, 2}, rng);
    const Tensor bias = random_tensor({2}, rng);
    const Tensor x = random_tensor({5, 5, 2}, rng);
    auto conv_net = [&](Tape& t, Var v) {
      const Var k = t.leaf(kernels, false);
      const Var b = t.leaf(bias, false);
      const Var h = t.relu(t.add_channel_bias(t.conv2d(v, k, {1, 1}), b));
      return t.sum(t.square(t.max_pool2x2(h)));
    };
    CHECK(fd_relative_error(x, conv_net) < 1e-5);

    const Tensor w = random_tensor({3, 6}, rng), wb = random_tensor({3}, rng);
    auto dense_net = [&](Tape& t, Var v) {
      const Var flat = t.reshape(t.affine(v, 0.5, 0.1), {6});
      return t.cross_entropy(t.dense(flat, t.leaf(w, false), t.leaf(wb, false)), 2);
    };
    CHECK(fd_relative_error(random_tensor({2, 3}, rng), dense_net) < 1e-6);

    const Tensor m = random_tensor({4, 2}, rng);
    auto matmul_net = [&](Tape& t, Var v) {
      const Var s = t.softmax(t.reshape(t.matmul(v, t.leaf(m, false)), {6}));
      return t.sum(t.square(s));
    };
    CHECK(fd_relative_error(random_tensor({3, 4}, rng), matmul_net) < 1e-6);
  }

  TEST_CASE("parameters not requiring gradients get zeros") {
    Tape tape;
    const Var a = tape.leaf(Tensor({2}, 1.0), true);
    const Var b = tape.leaf(Tensor({2}, 5.0), false);
    const Gradients g = tape.backward(tape.sum(tape.square(a)), Tensor({1}, 1.0));
    CHECK(g[b].values() == std::vector<double>{0.0, 0.0});
  }
}
