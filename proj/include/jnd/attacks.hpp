#pragma once

// White-box attacks on a Model: the regularised JND gradient-descent attack
// and the iterative FGSM, FGV and DeepFool baselines. All of them walk
// x(0), x(1), ... and record the first iteration K at which the model's
// answer satisfies the attack goal.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jnd/model.hpp"
#include "jnd/tensor.hpp"

namespace jnd {

enum class AttackMethod { jnd, fgsm, fgv, deepfool };
std::string_view method_name(AttackMethod m) noexcept;
AttackMethod parse_method(std::string_view name);

enum class StopRule { first_label_flip, confidence_reached };
std::string_view stop_rule_name(StopRule r) noexcept;
StopRule parse_stop_rule(std::string_view name);

struct AttackMode {
  bool targeted = false;
  std::size_t target_label = 0;

  static AttackMode non_targeted() { return {}; }
  static AttackMode targeted_at(std::size_t label) { return {true, label}; }
};

inline constexpr double kDeepFoolOvershoot = 0.02;

struct AttackConfig {
  // Weights of the loss, squared-L2, bounded-range and total-variation terms.
  double lambda1 = 10.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double lambda4 = 10.0;
  double alpha = 0.05;    // JND learning rate
  double epsilon = 0.5;   // FGSM / FGV step scale
  std::size_t max_iterations = 1000;
  std::optional<double> confidence_threshold;
  AttackMode mode;
  StopRule stop_rule = StopRule::first_label_flip;
  // Keep iterating after K until max_iterations (trace runs).
  bool stop_on_success = true;
  double overshoot = kDeepFoolOvershoot;
  // Pixel value of one unit of attack arithmetic. Costs, alpha and epsilon are
  // stated for intensities u = x / intensity_unit, so 255 means unit-range
  // coordinates and 1 means raw 8-bit levels.
  double intensity_unit = 255.0;

  // Throws ConfigError for out-of-range values or a targeted mode whose
  // target equals true_label.
  void validate(std::size_t true_label, std::size_t num_classes) const;
};

// lambda = (10, 1, 1, 10), alpha = 0.05 and FGV epsilon 0.4 in unit-range
// coordinates; FGSM epsilon 0.5 in 8-bit levels (intensity_unit 1).
AttackConfig preset_config(AttackMethod method);

struct AttackState {
  Image current;   // x(k)
  Image original;  // x(0)
  std::size_t iteration = 0;
  std::size_t true_label = 0;

  static AttackState start(const Image& image, std::size_t true_label) { return {image, image, 0, true_label}; }
};

// Every term already carries its lambda weight.
struct CostBreakdown {
  double total = 0.0;
  double loss_term = 0.0;
  double l2_term = 0.0;
  double br_term = 0.0;
  double tv_term = 0.0;
};

struct AttackResult {
  AttackMethod method = AttackMethod::jnd;
  Image original_image;                  // x(0)
  Image adversarial_image;               // x(K) when successful, otherwise the last iterate
  Image final_image;                     // last iterate
  std::optional<std::size_t> first_fool_iteration;  // K
  bool success = false;
  std::size_t iterations = 0;            // steps executed
  std::vector<double> confidence_trajectory;  // confidence of the predicted label, k = 0..iterations
  std::vector<std::size_t> label_trajectory;  // predicted label, k = 0..iterations
  std::vector<double> goal_confidence_trajectory;  // prob. of the target (targeted) or of the best wrong label
  std::vector<CostBreakdown> cost_trajectory;      // k = 0..iterations
  std::optional<double> jnd_l2;          // ||x(0) - x(K)||_2
  Prediction final_prediction;           // at adversarial_image
};

// Does `p` meet the attack goal (label flip / target hit, and the confidence
// threshold under confidence_reached)?
bool goal_reached(const Prediction& p, std::size_t true_label, const AttackConfig& config);

// lambda1 * Loss + lambda2 * ||u(k) - u(0)||^2 + lambda3 * BR(u) + lambda4 * TV(u)
// with u = x / intensity_unit. The loss is cross-entropy towards the target
// (targeted) or minus cross-entropy of the true label (non-targeted).
CostBreakdown jnd_cost(const AttackState& state, const Model& model, const AttackConfig& config);

// d(total cost)/d(x(k)), assembled from the model gradient, the regulariser
// gradients and the squared-distance gradient.
Image jnd_gradient(const AttackState& state, const Model& model, const AttackConfig& config);

// u(k+1) = clamp(u(k) - alpha * dCost/du), i.e.
// x(k+1) = clamp(x(k) - alpha * unit^2 * dCost/dx). Throws NumericalError on a
// non-finite gradient or a step with max-norm above 255.
AttackState jnd_step(const AttackState& state, const Model& model, const AttackConfig& config);

// Each throws PreconditionError when the model misclassifies `image` as
// something other than true_label, and ConfigError for invalid configs.
AttackResult jnd_attack(const Model& model, const Image& image, std::size_t true_label, const AttackConfig& config);
AttackResult fgsm_attack(const Model& model, const Image& image, std::size_t true_label, const AttackConfig& config);
AttackResult fgv_attack(const Model& model, const Image& image, std::size_t true_label, const AttackConfig& config);
AttackResult deepfool_attack(const Model& model, const Image& image, std::size_t true_label,
                             const AttackConfig& config);
AttackResult run_attack(AttackMethod method, const Model& model, const Image& image, std::size_t true_label,
                        const AttackConfig& config);

// One linearised projection: the minimal step that moves x onto the nearest
// linearised boundary between `reference_label` and another class.
struct DeepFoolStep {
  Image perturbation;
  std::size_t toward_label = 0;
};
DeepFoolStep deepfool_projection(const Model& model, const Image& image, std::size_t reference_label);

struct BatchItem {
  std::size_t index = 0;
  bool skipped = false;  // initially misclassified
  std::optional<AttackResult> result;
};

// Attacks images[i] for every i on `jobs` worker threads. Results come back
// ordered by index whatever the scheduling.
std::vector<BatchItem> run_batch(AttackMethod method, const Model& model, const std::vector<Image>& images,
                                 const std::vector<std::size_t>& labels, const AttackConfig& config,
                                 std::size_t jobs = 1);

}  // namespace jnd
