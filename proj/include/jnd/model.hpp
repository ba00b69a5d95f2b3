#pragma once

// The attacked classifier: architecture description, weights, and the
// queries attacks need (prediction, loss gradients w.r.t. the input pixels,
// per-logit gradients).

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jnd/autodiff.hpp"
#include "jnd/tensor.hpp"

namespace jnd {

enum class LayerKind { scale, conv, relu, max_pool, flatten, dense, softmax };

std::string_view layer_kind_name(LayerKind kind) noexcept;
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // conv
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  // dense
  std::size_t units = 0;
  // scale: x * factor + offset
  double factor = 1.0;
  double offset = 0.0;

  static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec dense(std::size_t units);
  static LayerSpec scale(double factor, double offset = 0.0);
  static LayerSpec of(LayerKind kind);

  bool parametric() const noexcept { return kind == LayerKind::conv || kind == LayerKind::dense; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  Shape input_shape;  // {H, W, C}
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;

  // Output shape of every layer, in order. Throws DimensionError/ConfigError
  // when consecutive layers do not fit or the head is not num_classes wide.
  std::vector<Shape> layer_shapes() const;
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// conv(8,3x3) relu pool conv(16,3x3) relu pool flatten dense(num_classes) softmax,
// preceded by a fixed input scale layer.
ModelSpec desk_model_spec(std::size_t height, std::size_t width, std::size_t channels, std::size_t num_classes);

struct LayerParams {
  Tensor weight;  // conv [K, kh, kw, C]; dense [out, in]
  Tensor bias;    // [K] / [out]
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// One entry per layer of the spec; non-parametric layers hold empty tensors.
using Parameters = std::vector<LayerParams>;

// Expected weight/bias shapes per layer; empty shapes for non-parametric layers.
std::vector<std::pair<Shape, Shape>> parameter_shapes(const ModelSpec& spec);

// Uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)); zero biases.
Parameters init_parameters(const ModelSpec& spec, unsigned long long seed);
Parameters zero_parameters(const ModelSpec& spec);

struct Prediction {
  std::size_t label = 0;
  double confidence = 0.0;
  std::vector<double> distribution;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

Prediction prediction_from_logits(const Tensor& logits);

enum class LossKind { cross_entropy };
LossKind parse_loss_kind(std::string_view name);

struct LossSpec {
  std::size_t target_label = 0;
  LossKind kind = LossKind::cross_entropy;
};

// Prediction, loss and d(loss)/d(image) from one forward/backward pass.
struct LossEvaluation {
  Prediction prediction;
  double loss = 0.0;
  Image gradient;
};

class Model {
 public:
  Model(ModelSpec spec, Parameters params);

  const ModelSpec& spec() const noexcept { return spec_; }
  const Parameters& parameters() const noexcept { return params_; }
  Parameters& mutable_parameters() noexcept { return params_; }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }

  // Records the pre-softmax logits on `tape`.
  Var forward(Tape& tape, const Image& image, bool grad_input, bool grad_params,
              std::vector<Var>* param_vars = nullptr) const;

  Tensor logits(const Image& image) const;
  Prediction predict(const Image& image) const;
  Image input_gradient(const Image& image, const LossSpec& loss) const;
  LossEvaluation evaluate(const Image& image, const LossSpec& loss) const;

  // Logits plus d(logit_c)/d(image) for every class c.
  struct LogitJacobian {
    Tensor logits;
    std::vector<Image> gradients;
  };
  LogitJacobian logit_jacobian(const Image& image) const;

 private:
  void check_input(const Image& image) const;

  ModelSpec spec_;
  Parameters params_;
};

}  // namespace jnd
