#include "jnd/model.hpp"

#include <algorithm>
#include <cmath>

#include "jnd/error.hpp"
#include "jnd/random.hpp"

namespace jnd {

std::string_view layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::scale: return "scale";
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto k : {LayerKind::scale, LayerKind::conv, LayerKind::relu, LayerKind::max_pool, LayerKind::flatten,
                 LayerKind::dense, LayerKind::softmax}) {
    if (layer_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv(std::size_t filters, std::size_t kernel, std::size_t stride, std::size_t padding) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.units = units;
  return l;
}

LayerSpec LayerSpec::scale(double factor, double offset) {
  LayerSpec l;
  l.kind = LayerKind::scale;
  l.factor = factor;
  l.offset = offset;
  return l;
}

LayerSpec LayerSpec::of(LayerKind kind) {
  LayerSpec l;
  l.kind = kind;
  return l;
}

std::vector<Shape> ModelSpec::layer_shapes() const {
  if (input_shape.size() != 3 || shape_size(input_shape) == 0) {
    throw DimensionError("model input shape must be a non-empty [H, W, C], got " + shape_string(input_shape));
  }
  if (num_classes == 0) throw ConfigError("model needs at least one class");
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::scale:
      case LayerKind::relu:
        break;
      case LayerKind::conv:
        if (cur.size() != 3) throw DimensionError(where + ": expects an [H, W, C] input");
        if (l.filters == 0 || l.kernel == 0 || l.stride == 0) throw ConfigError(where + ": zero extent");
        if (l.kernel > cur[0] + 2 * l.padding || l.kernel > cur[1] + 2 * l.padding) {
          throw DimensionError(where + ": kernel larger than padded input " + shape_string(cur));
        }
        cur = {(cur[0] + 2 * l.padding - l.kernel) / l.stride + 1, (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1,
               l.filters};
        break;
      case LayerKind::max_pool:
        if (cur.size() != 3 || cur[0] < 2 || cur[1] < 2) throw DimensionError(where + ": input too small " + shape_string(cur));
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      case LayerKind::flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::dense:
        if (cur.size() != 1) throw DimensionError(where + ": expects a flat input, got " + shape_string(cur));
        if (l.units == 0) throw ConfigError(where + ": zero units");
        cur = {l.units};
        break;
      case LayerKind::softmax:
        if (cur.size() != 1) throw DimensionError(where + ": expects a flat input");
        if (i + 1 != layers.size()) throw ConfigError(where + ": softmax must be the last layer");
        break;
    }
    shapes.push_back(cur);
  }
  if (cur != Shape{num_classes}) {
    throw DimensionError("model output " + shape_string(cur) + " does not match num_classes " +
                         std::to_string(num_classes));
  }
  return shapes;
}

void ModelSpec::validate() const { (void)layer_shapes(); }

ModelSpec desk_model_spec(std::size_t height, std::size_t width, std::size_t channels, std::size_t num_classes) {
  ModelSpec spec;
  spec.input_shape = {height, width, channels};
  spec.num_classes = num_classes;
  spec.layers = {LayerSpec::scale(1.0 / 255.0),
                 LayerSpec::conv(8, 3, 1, 1),
                 LayerSpec::of(LayerKind::relu),
                 LayerSpec::of(LayerKind::max_pool),
                 LayerSpec::conv(16, 3, 1, 1),
                 LayerSpec::of(LayerKind::relu),
                 LayerSpec::of(LayerKind::max_pool),
                 LayerSpec::of(LayerKind::flatten),
                 LayerSpec::dense(num_classes),
                 LayerSpec::of(LayerKind::softmax)};
  spec.validate();
  return spec;
}

std::vector<std::pair<Shape, Shape>> parameter_shapes(const ModelSpec& spec) {
  const std::vector<Shape> shapes = spec.layer_shapes();
  std::vector<std::pair<Shape, Shape>> out;
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::conv) {
      out.emplace_back(Shape{l.filters, l.kernel, l.kernel, in[2]}, Shape{l.filters});
    } else if (l.kind == LayerKind::dense) {
      out.emplace_back(Shape{l.units, in[0]}, Shape{l.units});
    } else {
      out.emplace_back();
    }
    in = shapes[i];
  }
  return out;
}

Parameters zero_parameters(const ModelSpec& spec) {
  Parameters params;
  for (const auto& [w, b] : parameter_shapes(spec)) {
    if (w.empty()) {
      params.emplace_back();
    } else {
      params.push_back({Tensor(w), Tensor(b)});
    }
  }
  return params;
}

Parameters init_parameters(const ModelSpec& spec, unsigned long long seed) {
  Rng rng(seed);
  Parameters params = zero_parameters(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (!l.parametric()) continue;
    Tensor& w = params[i].weight;
    double fan_in = 0, fan_out = 0;
    if (l.kind == LayerKind::conv) {
      const double area = static_cast<double>(l.kernel * l.kernel);
      fan_in = area * static_cast<double>(w.dim(3));
      fan_out = area * static_cast<double>(l.filters);
    } else {
      fan_in = static_cast<double>(w.dim(1));
      fan_out = static_cast<double>(w.dim(0));
    }
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.data()) v = rng.uniform(-s, s);
  }
  return params;
}

Prediction prediction_from_logits(const Tensor& logits) {
  const Tensor p = ops::softmax(logits);
  Prediction pred;
  pred.distribution = p.values();
  pred.label = static_cast<std::size_t>(std::max_element(p.data().begin(), p.data().end()) - p.data().begin());
  pred.confidence = p[pred.label];
  return pred;
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "cross_entropy" || name == "xent") return LossKind::cross_entropy;
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

Model::Model(ModelSpec spec, Parameters params) : spec_(std::move(spec)), params_(std::move(params)) {
  const auto shapes = parameter_shapes(spec_);
  if (params_.size() != shapes.size()) {
    throw DimensionError("parameters cover " + std::to_string(params_.size()) + " layers, spec has " +
                         std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params_[i].weight.shape() != shapes[i].first || params_[i].bias.shape() != shapes[i].second) {
      // Non-parametric layers: both empty shapes; Tensor() has an empty shape too.
      if (!(shapes[i].first.empty() && params_[i].weight.empty() && params_[i].bias.empty())) {
        throw DimensionError("layer " + std::to_string(i) + " parameters " + shape_string(params_[i].weight.shape()) +
                             " do not match spec " + shape_string(shapes[i].first));
      }
    }
    if (!params_[i].weight.all_finite() || !params_[i].bias.all_finite()) {
      throw InputError("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

void Model::check_input(const Image& image) const {
  if (image.shape() != spec_.input_shape) {
    throw DimensionError("image shape " + shape_string(image.shape()) + " does not match model input " +
                         shape_string(spec_.input_shape));
  }
}

Var Model::forward(Tape& tape, const Image& image, bool grad_input, bool grad_params,
                   std::vector<Var>* param_vars) const {
  check_input(image);
  Var x = tape.leaf(image, grad_input);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    switch (l.kind) {
      case LayerKind::scale:
        x = tape.affine(x, l.factor, l.offset);
        break;
      case LayerKind::conv: {
        const Var w = tape.leaf(params_[i].weight, grad_params);
        const Var b = tape.leaf(params_[i].bias, grad_params);
        if (param_vars) {
          param_vars->push_back(w);
          param_vars->push_back(b);
        }
        x = tape.add_channel_bias(tape.conv2d(x, w, {l.stride, l.padding}), b);
        break;
      }
      case LayerKind::relu:
        x = tape.relu(x);
        break;
      case LayerKind::max_pool:
        x = tape.max_pool2x2(x);
        break;
      case LayerKind::flatten:
        x = tape.reshape(x, {tape.value(x).size()});
        break;
      case LayerKind::dense: {
        const Var w = tape.leaf(params_[i].weight, grad_params);
        const Var b = tape.leaf(params_[i].bias, grad_params);
        if (param_vars) {
          param_vars->push_back(w);
          param_vars->push_back(b);
        }
        x = tape.dense(x, w, b);
        break;
      }
      case LayerKind::softmax:
        // Probabilities are taken from the logits by the caller; losses use
        // the fused log-sum-exp form.
        break;
    }
  }
  return x;
}

Tensor Model::logits(const Image& image) const {
  Tape tape;
  return tape.value(forward(tape, image, false, false));
}

Prediction Model::predict(const Image& image) const { return prediction_from_logits(logits(image)); }

LossEvaluation Model::evaluate(const Image& image, const LossSpec& loss) const {
  if (loss.target_label >= spec_.num_classes) {
    throw ConfigError("target label " + std::to_string(loss.target_label) + " >= num_classes " +
                      std::to_string(spec_.num_classes));
  }
  Tape tape;
  const Var logits = forward(tape, image, true, false);
  const Var l = tape.cross_entropy(logits, loss.target_label);
  LossEvaluation out;
  out.prediction = prediction_from_logits(tape.value(logits));
  out.loss = tape.value(l)[0];
  Gradients g = tape.backward(l, Tensor({1}, {1.0}));
  out.gradient = g.take(Var{0});
  return out;
}

Image Model::input_gradient(const Image& image, const LossSpec& loss) const { return evaluate(image, loss).gradient; }

Model::LogitJacobian Model::logit_jacobian(const Image& image) const {
  Tape tape;
  const Var logits = forward(tape, image, true, false);
  LogitJacobian out;
  out.logits = tape.value(logits);
  for (std::size_t c = 0; c < spec_.num_classes; ++c) {
    Tensor seed({spec_.num_classes});
    seed[c] = 1.0;
    Gradients g = tape.backward(logits, seed);
    out.gradients.push_back(g.take(Var{0}));
  }
  return out;
}

}  // namespace jnd
