#pragma once

// Minimal reverse-mode differentiation over a fixed sequence of layer ops.
// A Tape records one forward pass; backward() can be called on it any number
// of times with different seeds. Build a fresh tape for every forward pass.

#include <cstddef>
#include <functional>
#include <vector>

#include "jnd/ops.hpp"
#include "jnd/tensor.hpp"

namespace jnd {

struct Var {
  std::size_t id = 0;
};

class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  // Gradient of the seeded output w.r.t. v. Zeros when v does not influence it.
  Tensor operator[](Var v) const;
  // Moves the gradient out; avoids a copy on the hot path.
  Tensor take(Var v);

 private:
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

class Tape {
 public:
  Tape() = default;
  // Recorded closures refer back to the tape, so it stays put.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);

  Var conv2d(Var input, Var kernels, ops::Conv2dGeometry geom);
  Var add_channel_bias(Var input, Var bias);
  Var dense(Var x, Var weights, Var bias);
  Var matmul(Var a, Var b);
  Var relu(Var input);
  Var max_pool2x2(Var input);
  Var reshape(Var input, Shape shape);
  // input * scale + shift, elementwise with scalar constants.
  Var affine(Var input, double scale, double shift);
  Var square(Var input);
  // Scalar [1] holding the sum of all elements.
  Var sum(Var input);
  Var softmax(Var logits);
  // Scalar [1]: cross-entropy of softmax(logits) against label.
  Var cross_entropy(Var logits, std::size_t label);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Propagates `seed` (shaped like value(output)) back to every node.
  // Throws DimensionError on a seed shape mismatch.
  Gradients backward(Var output, const Tensor& seed) const;

 private:
  // Receives d(output)/d(this node) and accumulates into the parents' slots.
  using BackwardFn = std::function<void(const Tensor& grad, std::vector<Tensor>& grads)>;

  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn);

  std::vector<Node> nodes_;
};

}  // namespace jnd
