#include "jnd/autodiff.hpp"

#include "jnd/error.hpp"
#include "jnd/simd/kernels.hpp"

namespace jnd {
namespace {

void accumulate(std::vector<Tensor>& grads, std::size_t id, Tensor g) {
  Tensor& slot = grads[id];
  if (slot.empty()) {
    slot = std::move(g);
  } else {
    simd::axpy(1.0, g.data().data(), slot.data().data(), slot.size());
  }
}

}  // namespace

Tensor Gradients::operator[](Var v) const {
  const Tensor& g = grads_.at(v.id);
  return g.empty() ? Tensor(shapes_.at(v.id)) : g;
}

Tensor Gradients::take(Var v) {
  Tensor& g = grads_.at(v.id);
  return g.empty() ? Tensor(shapes_.at(v.id)) : std::move(g);
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), requires_grad, requires_grad ? std::move(fn) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) { return push(std::move(value), requires_grad, {}); }

Var Tape::conv2d(Var input, Var kernels, ops::Conv2dGeometry geom) {
  const bool gi = requires_grad(input), gk = requires_grad(kernels);
  Tensor out = ops::conv2d(value(input), value(kernels), geom);
  return push(std::move(out), gi || gk, [this, input, kernels, geom, gi, gk](const Tensor& g, std::vector<Tensor>& grads) {
    auto r = ops::conv2d_backward(value(input), value(kernels), geom, g, gi, gk);
    if (gi) accumulate(grads, input.id, std::move(r.input));
    if (gk) accumulate(grads, kernels.id, std::move(r.kernels));
  });
}

Var Tape::add_channel_bias(Var input, Var bias) {
  const bool gi = requires_grad(input), gb = requires_grad(bias);
  Tensor out = ops::add_channel_bias(value(input), value(bias));
  return push(std::move(out), gi || gb, [input, bias, gi, gb](const Tensor& g, std::vector<Tensor>& grads) {
    if (gb) accumulate(grads, bias.id, ops::channel_bias_backward(g));
    if (gi) accumulate(grads, input.id, g);
  });
}

Var Tape::dense(Var x, Var weights, Var bias) {
  const bool gx = requires_grad(x), gw = requires_grad(weights) || requires_grad(bias);
  Tensor out = ops::dense(value(x), value(weights), value(bias));
  return push(std::move(out), gx || gw, [this, x, weights, bias, gx, gw](const Tensor& g, std::vector<Tensor>& grads) {
    auto r = ops::dense_backward(value(x), value(weights), g, gx, gw);
    if (gx) accumulate(grads, x.id, std::move(r.x));
    if (gw) {
      accumulate(grads, weights.id, std::move(r.weights));
      accumulate(grads, bias.id, std::move(r.bias));
    }
  });
}

Var Tape::matmul(Var a, Var b) {
  const bool ga = requires_grad(a), gb = requires_grad(b);
  Tensor out = ops::matmul(value(a), value(b));
  return push(std::move(out), ga || gb, [this, a, b, ga, gb](const Tensor& g, std::vector<Tensor>& grads) {
    auto r = ops::matmul_backward(value(a), value(b), g, ga, gb);
    if (ga) accumulate(grads, a.id, std::move(r.a));
    if (gb) accumulate(grads, b.id, std::move(r.b));
  });
}

Var Tape::relu(Var input) {
  Tensor out = ops::relu(value(input));
  return push(std::move(out), requires_grad(input), [this, input](const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, input.id, ops::relu_backward(value(input), g));
  });
}

Var Tape::max_pool2x2(Var input) {
  Tensor out = ops::max_pool2x2(value(input));
  return push(std::move(out), requires_grad(input), [this, input](const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, input.id, ops::max_pool2x2_backward(value(input), g));
  });
}

Var Tape::reshape(Var input, Shape shape) {
  Tensor out = value(input).reshaped(std::move(shape));
  return push(std::move(out), requires_grad(input), [this, input](const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, input.id, g.reshaped(value(input).shape()));
  });
}

Var Tape::affine(Var input, double scale, double shift) {
  Tensor out = value(input);
  for (double& v : out.data()) v = v * scale + shift;
  return push(std::move(out), requires_grad(input), [input, scale](const Tensor& g, std::vector<Tensor>& grads) {
    Tensor d = g;
    for (double& v : d.data()) v *= scale;
    accumulate(grads, input.id, std::move(d));
  });
}

Var Tape::square(Var input) {
  Tensor out = value(input);
  for (double& v : out.data()) v *= v;
  return push(std::move(out), requires_grad(input), [this, input](const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& x = value(input);
    Tensor d(x.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * x[i] * g[i];
    accumulate(grads, input.id, std::move(d));
  });
}

Var Tape::sum(Var input) {
  double total = 0.0;
  for (double v : value(input).data()) total += v;
  return push(Tensor({1}, {total}), requires_grad(input), [this, input](const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, input.id, Tensor(value(input).shape(), g[0]));
  });
}

Var Tape::softmax(Var logits) {
  Tensor out = ops::softmax(value(logits));
  const std::size_t self = nodes_.size();
  return push(std::move(out), requires_grad(logits), [this, logits, self](const Tensor& g, std::vector<Tensor>& grads) {
    // dz_i = p_i * (g_i - sum_j g_j p_j)
    const Tensor& p = nodes_[self].value;
    const double gp = simd::dot(g.data().data(), p.data().data(), p.size());
    Tensor d(p.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = p[i] * (g[i] - gp);
    accumulate(grads, logits.id, std::move(d));
  });
}

Var Tape::cross_entropy(Var logits, std::size_t label) {
  const double loss = ops::cross_entropy(value(logits), label);
  return push(Tensor({1}, {loss}), requires_grad(logits), [this, logits, label](const Tensor& g, std::vector<Tensor>& grads) {
    Tensor d = ops::cross_entropy_backward(value(logits), label);
    for (double& v : d.data()) v *= g[0];
    accumulate(grads, logits.id, std::move(d));
  });
}

Gradients Tape::backward(Var output, const Tensor& seed) const {
  if (seed.shape() != value(output).shape()) {
    throw DimensionError("backward: seed shape " + shape_string(seed.shape()) + " does not match output " +
                         shape_string(value(output).shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<Shape> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) shapes[i] = nodes_[i].value.shape();
  grads[output.id] = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (grads[i].empty() || !node.backward) continue;
    node.backward(grads[i], grads);
  }
  return Gradients(std::move(grads), std::move(shapes));
}

}  // namespace jnd
