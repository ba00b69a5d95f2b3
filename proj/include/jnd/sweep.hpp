#pragma once

// Grid search over attack hyperparameters. Each cell attacks the same
// validation images and is scored by mean(PSNR) * mean(SSIM) / mean(K) over
// its successful attacks; the best viable cell wins.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jnd/attacks.hpp"
#include "jnd/dataset.hpp"
#include "jnd/metrics.hpp"
#include "jnd/model.hpp"

namespace jnd {

inline constexpr double kDefaultSuccessFloor = 0.9;
inline constexpr std::size_t kDefaultValidationCount = 100;

struct SweepSpec {
  AttackMethod method = AttackMethod::jnd;
  // Everything not swept: mode, stop rule, threshold, iteration cap, unit.
  AttackConfig base;
  // Candidate values. JND sweeps lambda1..4 and alpha, FGSM/FGV sweep
  // epsilon; DeepFool has a single cell. Every list must be nonempty.
  std::vector<double> lambda1{10.0};
  std::vector<double> lambda2{1.0};
  std::vector<double> lambda3{1.0};
  std::vector<double> lambda4{10.0};
  std::vector<double> alpha{0.05};
  std::vector<double> epsilon{0.5};
  std::size_t validation_count = kDefaultValidationCount;
  double success_floor = kDefaultSuccessFloor;
  std::size_t jobs = 1;

  // Throws ConfigError for empty lists, negative values or a floor outside [0, 1].
  void validate() const;
  std::size_t grid_size() const;
  // Cell configurations in row-major order over (lambda1, lambda2, lambda3, lambda4, alpha) or epsilon.
  std::vector<AttackConfig> cells() const;
};

struct SweepImageRecord {
  std::size_t index = 0;  // position in the validation set
  bool success = false;
  std::size_t iterations = 0;  // K when successful, otherwise steps executed
  double psnr = 0.0;
  double ssim = 0.0;
  std::string error;  // set when the attack aborted with a numerical error
};

struct SweepCell {
  std::size_t index = 0;
  AttackConfig config;
  std::vector<SweepImageRecord> records;
  double success_rate = 0.0;
  // Means over successful attacks; absent when none succeeded.
  std::optional<double> mean_psnr;
  std::optional<double> mean_ssim;
  std::optional<double> mean_iterations;
  std::optional<double> objective;
  bool viable = false;  // success_rate >= floor and an objective exists
};

struct SweepResult {
  AttackMethod method = AttackMethod::jnd;
  double success_floor = kDefaultSuccessFloor;
  std::size_t validation_count = 0;
  std::vector<SweepCell> cells;
  std::size_t best = 0;  // index into cells

  const SweepCell& best_cell() const { return cells.at(best); }
};

// mean(PSNR) * mean(SSIM) / mean(iterations) over the successful records.
std::optional<double> sweep_objective(const std::vector<SweepImageRecord>& records);

// Attacks the first validation_count images of `validation` for every cell.
// Throws PreconditionError when a validation image is misclassified,
// InputError for an empty validation set and NoViableConfigError when no
// cell reaches the success floor. Ties go to the lower cell index.
SweepResult run_sweep(const Model& model, const Dataset& validation, const SweepSpec& spec,
                      const MetricsConfig& metrics = {});

// One row per cell.
std::string sweep_csv(const SweepResult& result);
// Cells with their per-image records.
nlohmann::json sweep_json(const SweepResult& result);

nlohmann::json attack_config_json(const AttackConfig& config);

}  // namespace jnd
