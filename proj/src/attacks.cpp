#include "jnd/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "jnd/error.hpp"
#include "jnd/regularizers.hpp"
#include "jnd/simd/kernels.hpp"

namespace jnd {

std::string_view method_name(AttackMethod m) noexcept {
  switch (m) {
    case AttackMethod::jnd: return "jnd";
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::fgv: return "fgv";
    case AttackMethod::deepfool: return "deepfool";
  }
  return "?";
}

AttackMethod parse_method(std::string_view name) {
  for (auto m : {AttackMethod::jnd, AttackMethod::fgsm, AttackMethod::fgv, AttackMethod::deepfool}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown attack method '" + std::string(name) + "' (expected jnd|fgsm|fgv|deepfool)");
}

std::string_view stop_rule_name(StopRule r) noexcept {
  return r == StopRule::first_label_flip ? "first_label_flip" : "confidence_reached";
}

StopRule parse_stop_rule(std::string_view name) {
  if (name == "first_label_flip" || name == "flip") return StopRule::first_label_flip;
  if (name == "confidence_reached" || name == "confidence") return StopRule::confidence_reached;
  throw ConfigError("unknown stop rule '" + std::string(name) + "'");
}

void AttackConfig::validate(std::size_t true_label, std::size_t num_classes) const {
  for (double l : {lambda1, lambda2, lambda3, lambda4}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda weights must be finite and non-negative");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and non-negative");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be finite and non-negative");
  if (!(overshoot >= 0.0)) throw ConfigError("overshoot must be non-negative");
  if (!(intensity_unit > 0.0) || !std::isfinite(intensity_unit)) {
    throw ConfigError("intensity unit must be finite and positive");
  }
  if (confidence_threshold && !(*confidence_threshold >= 0.0 && *confidence_threshold < 1.0)) {
    throw ConfigError("confidence threshold must lie in [0, 1)");
  }
  if (stop_rule == StopRule::confidence_reached && !confidence_threshold) {
    throw ConfigError("stop rule confidence_reached needs a confidence threshold");
  }
  if (true_label >= num_classes) throw ConfigError("true label out of range");
  if (mode.targeted) {
    if (mode.target_label >= num_classes) {
      throw ConfigError("target label " + std::to_string(mode.target_label) + " >= num_classes " +
                        std::to_string(num_classes));
    }
    if (mode.target_label == true_label) {
      throw ConfigError("targeted attack target " + std::to_string(mode.target_label) + " equals the true label");
    }
  }
}

AttackConfig preset_config(AttackMethod method) {
  AttackConfig c;
  c.epsilon = method == AttackMethod::fgv ? 0.4 : 0.5;
  // A sign step is usable in 8-bit levels; the gradient-scaled methods are
  // too slow there and work in unit range instead.
  if (method == AttackMethod::fgsm) c.intensity_unit = 1.0;
  return c;
}

bool goal_reached(const Prediction& p, std::size_t true_label, const AttackConfig& config) {
  const bool fooled = config.mode.targeted ? p.label == config.mode.target_label : p.label != true_label;
  if (!fooled) return false;
  if (config.stop_rule == StopRule::confidence_reached) return p.confidence >= config.confidence_threshold.value_or(0.0);
  return true;
}

namespace {

double goal_confidence(const Prediction& p, std::size_t true_label, const AttackConfig& config) {
  if (config.mode.targeted) return p.distribution[config.mode.target_label];
  double best = 0.0;
  for (std::size_t c = 0; c < p.distribution.size(); ++c) {
    if (c != true_label) best = std::max(best, p.distribution[c]);
  }
  return best;
}

// The attack objective every method descends: CE towards the target, or
// minus CE of the true label. Returns its value and gradient at x.
struct Probe {
  Prediction prediction;
  double objective = 0.0;
  Image gradient;
};

Probe probe_objective(const Model& model, const Image& x, std::size_t true_label, const AttackConfig& config) {
  const std::size_t label = config.mode.targeted ? config.mode.target_label : true_label;
  LossEvaluation ev = model.evaluate(x, {label, LossKind::cross_entropy});
  Probe p{std::move(ev.prediction), ev.loss, std::move(ev.gradient)};
  if (!config.mode.targeted) {
    p.objective = -p.objective;
    for (double& g : p.gradient.data()) g = -g;
  }
  return p;
}

CostBreakdown cost_from_probe(const Probe& probe, const Image& x, const Image& x0, const AttackConfig& config) {
  const double s = config.intensity_unit;
  CostBreakdown c;
  c.loss_term = config.lambda1 * probe.objective;
  c.l2_term = config.lambda2 * simd::squared_distance(x.data().data(), x0.data().data(), x.size()) / (s * s);
  c.br_term = config.lambda3 * br_loss(x).value / s;
  c.tv_term = config.lambda4 * tv_loss(x).value / (s * s);
  c.total = c.loss_term + c.l2_term + c.br_term + c.tv_term;
  return c;
}

Image assemble_gradient(const Probe& probe, const Image& x, const Image& x0, const AttackConfig& config) {
  const double s = config.intensity_unit;
  Image g = Image::zeros_like(x);
  double* gd = g.data().data();
  const std::size_t n = g.size();
  if (config.lambda1 != 0.0) simd::axpy(config.lambda1, probe.gradient.data().data(), gd, n);
  if (config.lambda2 != 0.0) {
    simd::axpy(2.0 * config.lambda2 / (s * s), x.data().data(), gd, n);
    simd::axpy(-2.0 * config.lambda2 / (s * s), x0.data().data(), gd, n);
  }
  if (config.lambda3 != 0.0) simd::axpy(config.lambda3 / s, br_loss(x).gradient.data().data(), gd, n);
  if (config.lambda4 != 0.0) simd::axpy(config.lambda4 / (s * s), tv_loss(x).gradient.data().data(), gd, n);
  return g;
}

void check_finite(const Image& g, const char* what) {
  if (!g.all_finite()) throw NumericalError(std::string(what) + ": gradient contains NaN or Inf");
}

// x - scale * direction, refusing steps larger than the whole intensity range.
Image apply_step(const Image& x, const Image& direction, double scale, const char* what) {
  Image next = x;
  double step_max = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double s = scale * direction[i];
    step_max = std::max(step_max, std::abs(s));
    next[i] -= s;
  }
  if (!std::isfinite(step_max) || step_max > kPixelMax) {
    throw NumericalError(std::string(what) + ": step max-norm " + std::to_string(step_max) +
                         " exceeds 255; the step size is mis-set");
  }
  return clamp_to_range(std::move(next));
}

void check_start(const Model& model, const Prediction& p0, std::size_t true_label, const AttackConfig& config) {
  config.validate(true_label, model.num_classes());
  if (p0.label != true_label) {
    throw PreconditionError("image is classified as " + std::to_string(p0.label) + ", not its true label " +
                            std::to_string(true_label));
  }
}

class Recorder {
 public:
  Recorder(AttackMethod method, const Image& x0, std::size_t true_label, const AttackConfig& config)
      : true_label_(true_label), config_(config) {
    result_.method = method;
    result_.original_image = x0;
    result_.adversarial_image = x0;
    result_.final_image = x0;
  }

  // Records iterate k; returns true when the run should stop.
  bool record(std::size_t k, const Image& x, const Prediction& p, const CostBreakdown& cost) {
    result_.iterations = k;
    result_.final_image = x;
    result_.confidence_trajectory.push_back(p.confidence);
    result_.label_trajectory.push_back(p.label);
    result_.goal_confidence_trajectory.push_back(goal_confidence(p, true_label_, config_));
    result_.cost_trajectory.push_back(cost);
    if (!result_.first_fool_iteration && k > 0 && goal_reached(p, true_label_, config_)) {
      result_.first_fool_iteration = k;
      result_.adversarial_image = x;
      result_.final_prediction = p;
      return config_.stop_on_success;
    }
    if (!result_.first_fool_iteration) {
      result_.adversarial_image = x;
      result_.final_prediction = p;
    }
    return false;
  }

  AttackResult finish() {
    result_.success = result_.first_fool_iteration.has_value();
    if (result_.success) {
      const Image& a = result_.adversarial_image;
      const Image& o = result_.original_image;
      result_.jnd_l2 = std::sqrt(simd::squared_distance(a.data().data(), o.data().data(), a.size()));
    }
    return std::move(result_);
  }

 private:
  std::size_t true_label_;
  const AttackConfig& config_;
  AttackResult result_;
};

enum class GradientStep { jnd, sign, raw };

AttackResult gradient_attack(AttackMethod method, GradientStep kind, const Model& model, const Image& image,
                             std::size_t true_label, const AttackConfig& config) {
  const char* what = method_name(method).data();
  Image x = image;
  Probe probe = probe_objective(model, x, true_label, config);
  check_start(model, probe.prediction, true_label, config);
  Recorder rec(method, image, true_label, config);

  auto cost_of = [&](const Probe& p, const Image& xi) {
    if (kind == GradientStep::jnd) return cost_from_probe(p, xi, image, config);
    return CostBreakdown{p.objective, p.objective, 0.0, 0.0, 0.0};
  };
  rec.record(0, x, probe.prediction, cost_of(probe, x));

  // A gradient with respect to u is unit * (gradient w.r.t. x), and a step of
  // size t in u moves x by unit * t.
  const double unit = config.intensity_unit;
  for (std::size_t k = 0; k < config.max_iterations; ++k) {
    check_finite(probe.gradient, what);
    switch (kind) {
      case GradientStep::jnd: {
        const Image g = assemble_gradient(probe, x, image, config);
        check_finite(g, what);
        x = apply_step(x, g, config.alpha * unit * unit, what);
        break;
      }
      case GradientStep::sign: {
        Image s = Image::zeros_like(probe.gradient);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = (probe.gradient[i] > 0.0) - (probe.gradient[i] < 0.0);
        x = apply_step(x, s, config.epsilon * unit, what);
        break;
      }
      case GradientStep::raw:
        x = apply_step(x, probe.gradient, config.epsilon * unit * unit, what);
        break;
    }
    probe = probe_objective(model, x, true_label, config);
    if (rec.record(k + 1, x, probe.prediction, cost_of(probe, x))) break;
  }
  return rec.finish();
}

}  // namespace

CostBreakdown jnd_cost(const AttackState& state, const Model& model, const AttackConfig& config) {
  require_same_shape(state.current, state.original, "jnd_cost");
  const Probe p = probe_objective(model, state.current, state.true_label, config);
  return cost_from_probe(p, state.current, state.original, config);
}

Image jnd_gradient(const AttackState& state, const Model& model, const AttackConfig& config) {
  require_same_shape(state.current, state.original, "jnd_gradient");
  const Probe p = probe_objective(model, state.current, state.true_label, config);
  return assemble_gradient(p, state.current, state.original, config);
}

AttackState jnd_step(const AttackState& state, const Model& model, const AttackConfig& config) {
  if (state.iteration >= config.max_iterations) {
    throw ConfigError("jnd_step: iteration " + std::to_string(state.iteration) + " already at the cap");
  }
  const Image g = jnd_gradient(state, model, config);
  check_finite(g, "jnd_step");
  AttackState next = state;
  next.current = apply_step(state.current, g, config.alpha * config.intensity_unit * config.intensity_unit, "jnd_step");
  next.iteration = state.iteration + 1;
  return next;
}

AttackResult jnd_attack(const Model& model, const Image& image, std::size_t true_label, const AttackConfig& config) {
  return gradient_attack(AttackMethod::jnd, GradientStep::jnd, model, image, true_label, config);
}

AttackResult fgsm_attack(const Model& model, const Image& image, std::size_t true_label, const AttackConfig& config) {
  return gradient_attack(AttackMethod::fgsm, GradientStep::sign, model, image, true_label, config);
}

AttackResult fgv_attack(const Model& model, const Image& image, std::size_t true_label, const AttackConfig& config) {
  return gradient_attack(AttackMethod::fgv, GradientStep::raw, model, image, true_label, config);
}

DeepFoolStep deepfool_projection(const Model& model, const Image& image, std::size_t reference_label) {
  if (model.num_classes() < 2) throw ConfigError("DeepFool needs at least two classes");
  const Model::LogitJacobian jac = model.logit_jacobian(image);
  const Image& g_ref = jac.gradients.at(reference_label);
  const std::size_t n = image.size();
  double best_ratio = std::numeric_limits<double>::infinity();
  std::size_t best = reference_label;
  double best_df = 0.0, best_wnorm2 = 0.0;
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    if (c == reference_label) continue;
    const double wnorm2 = simd::squared_distance(jac.gradients[c].data().data(), g_ref.data().data(), n);
    const double df = jac.logits[c] - jac.logits[reference_label];
    if (wnorm2 <= 0.0) continue;
    const double ratio = std::abs(df) / std::sqrt(wnorm2);
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = c;
      best_df = df;
      best_wnorm2 = wnorm2;
    }
  }
  if (best == reference_label) throw NumericalError("DeepFool: every class has the same logit gradient");
  DeepFoolStep step{Image::zeros_like(image), best};
  // r = (|df| + 1e-4) / ||w||^2 * w, w = grad f_best - grad f_ref
  const double scale = (std::abs(best_df) + 1e-4) / best_wnorm2;
  for (std::size_t i = 0; i < n; ++i) step.perturbation[i] = scale * (jac.gradients[best][i] - g_ref[i]);
  return step;
}

AttackResult deepfool_attack(const Model& model, const Image& image, std::size_t true_label,
                             const AttackConfig& config) {
  if (model.num_classes() < 2) throw ConfigError("DeepFool needs at least two classes");
  if (config.mode.targeted) throw ConfigError("DeepFool supports non-targeted mode only");
  if (config.stop_rule != StopRule::first_label_flip) throw ConfigError("DeepFool stops at the first label flip only");
  const Prediction p0 = model.predict(image);
  check_start(model, p0, true_label, config);
  AttackConfig cfg = config;
  cfg.stop_on_success = true;
  Recorder rec(AttackMethod::deepfool, image, true_label, cfg);
  rec.record(0, image, p0, {});

  Image x = image;
  Image r_total = Image::zeros_like(image);
  for (std::size_t k = 0; k < cfg.max_iterations; ++k) {
    const DeepFoolStep step = deepfool_projection(model, x, true_label);
    check_finite(step.perturbation, "deepfool");
    simd::axpy(1.0, step.perturbation.data().data(), r_total.data().data(), r_total.size());
    Image next = image;
    simd::axpy(1.0 + cfg.overshoot, r_total.data().data(), next.data().data(), next.size());
    const double jump = simd::max_abs_distance(next.data().data(), x.data().data(), x.size());
    if (!std::isfinite(jump) || jump > kPixelMax) {
      throw NumericalError("deepfool: step max-norm " + std::to_string(jump) + " exceeds 255");
    }
    x = clamp_to_range(std::move(next));
    const Prediction p = model.predict(x);
    if (rec.record(k + 1, x, p, {})) break;
  }
  return rec.finish();
}

AttackResult run_attack(AttackMethod method, const Model& model, const Image& image, std::size_t true_label,
                        const AttackConfig& config) {
  switch (method) {
    case AttackMethod::jnd: return jnd_attack(model, image, true_label, config);
    case AttackMethod::fgsm: return fgsm_attack(model, image, true_label, config);
    case AttackMethod::fgv: return fgv_attack(model, image, true_label, config);
    case AttackMethod::deepfool: return deepfool_attack(model, image, true_label, config);
  }
  throw ConfigError("unknown attack method");
}

std::vector<BatchItem> run_batch(AttackMethod method, const Model& model, const std::vector<Image>& images,
                                 const std::vector<std::size_t>& labels, const AttackConfig& config,
                                 std::size_t jobs) {
  if (images.size() != labels.size()) throw InputError("run_batch: images and labels differ in length");
  for (std::size_t i = 0; i < labels.size(); ++i) config.validate(labels[i], model.num_classes());

  std::vector<BatchItem> items(images.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      try {
        items[i].index = i;
        if (model.predict(images[i]).label != labels[i]) {
          items[i].skipped = true;
          continue;
        }
        items[i].result = run_attack(method, model, images[i], labels[i], config);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, images.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return items;
}

}  // namespace jnd
