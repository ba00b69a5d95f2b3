#include "jnd/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "jnd/csv.hpp"
#include "jnd/error.hpp"

namespace jnd {

namespace {

void check_list(const std::vector<double>& values, const char* name) {
  if (values.empty()) throw ConfigError(std::string("sweep: candidate list '") + name + "' is empty");
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("sweep: candidate for '") + name + "' must be finite and non-negative");
    }
  }
}

SweepCell run_cell(const Model& model, const Dataset& validation, std::size_t count, const AttackConfig& config,
                   AttackMethod method, const MetricsConfig& metrics) {
  SweepCell cell;
  cell.config = config;
  std::size_t successes = 0;
  for (std::size_t i = 0; i < count; ++i) {
    SweepImageRecord rec;
    rec.index = i;
    AttackResult r;
    try {
      r = run_attack(method, model, validation.images[i], validation.labels[i], config);
    } catch (const NumericalError& e) {
      // An exploding step disqualifies the image, not the whole grid.
      rec.error = e.what();
      cell.records.push_back(rec);
      continue;
    }
    rec.success = r.success;
    rec.iterations = r.success ? *r.first_fool_iteration : r.iterations;
    if (r.success) {
      ++successes;
      rec.psnr = psnr(r.original_image, r.adversarial_image, metrics);
      rec.ssim = ssim(r.original_image, r.adversarial_image, metrics);
    }
    cell.records.push_back(rec);
  }
  cell.success_rate = static_cast<double>(successes) / static_cast<double>(count);
  if (successes > 0) {
    double p = 0.0, s = 0.0, k = 0.0;
    for (const auto& rec : cell.records) {
      if (!rec.success) continue;
      p += rec.psnr;
      s += rec.ssim;
      k += static_cast<double>(rec.iterations);
    }
    const auto n = static_cast<double>(successes);
    cell.mean_psnr = p / n;
    cell.mean_ssim = s / n;
    cell.mean_iterations = k / n;
  }
  cell.objective = sweep_objective(cell.records);
  return cell;
}

}  // namespace

void SweepSpec::validate() const {
  check_list(lambda1, "lambda1");
  check_list(lambda2, "lambda2");
  check_list(lambda3, "lambda3");
  check_list(lambda4, "lambda4");
  check_list(alpha, "alpha");
  check_list(epsilon, "epsilon");
  if (!(success_floor >= 0.0 && success_floor <= 1.0)) throw ConfigError("sweep: success floor must lie in [0, 1]");
  if (validation_count == 0) throw ConfigError("sweep: validation count must be positive");
}

std::size_t SweepSpec::grid_size() const {
  switch (method) {
    case AttackMethod::jnd:
      return lambda1.size() * lambda2.size() * lambda3.size() * lambda4.size() * alpha.size();
    case AttackMethod::fgsm:
    case AttackMethod::fgv:
      return epsilon.size();
    case AttackMethod::deepfool:
      return 1;
  }
  return 0;
}

std::vector<AttackConfig> SweepSpec::cells() const {
  std::vector<AttackConfig> out;
  if (method == AttackMethod::jnd) {
    for (double l1 : lambda1)
      for (double l2 : lambda2)
        for (double l3 : lambda3)
          for (double l4 : lambda4)
            for (double a : alpha) {
              AttackConfig c = base;
              c.lambda1 = l1;
              c.lambda2 = l2;
              c.lambda3 = l3;
              c.lambda4 = l4;
              c.alpha = a;
              out.push_back(c);
            }
  } else if (method == AttackMethod::deepfool) {
    out.push_back(base);
  } else {
    for (double e : epsilon) {
      AttackConfig c = base;
      c.epsilon = e;
      out.push_back(c);
    }
  }
  return out;
}

std::optional<double> sweep_objective(const std::vector<SweepImageRecord>& records) {
  double p = 0.0, s = 0.0, k = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.success) continue;
    p += r.psnr;
    s += r.ssim;
    k += static_cast<double>(r.iterations);
    ++n;
  }
  if (n == 0 || k == 0.0) return std::nullopt;
  const auto dn = static_cast<double>(n);
  return (p / dn) * (s / dn) / (k / dn);
}

SweepResult run_sweep(const Model& model, const Dataset& validation, const SweepSpec& spec,
                      const MetricsConfig& metrics) {
  spec.validate();
  validation.validate();
  if (validation.empty()) throw InputError("sweep: empty validation set");
  const std::size_t count = std::min(spec.validation_count, validation.size());
  for (std::size_t i = 0; i < count; ++i) {
    spec.base.validate(validation.labels[i], model.num_classes());
    if (model.predict(validation.images[i]).label != validation.labels[i]) {
      throw PreconditionError("sweep: validation image " + std::to_string(i) + " is misclassified");
    }
  }

  const std::vector<AttackConfig> configs = spec.cells();
  SweepResult result;
  result.method = spec.method;
  result.success_floor = spec.success_floor;
  result.validation_count = count;
  result.cells.resize(configs.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        result.cells[i] = run_cell(model, validation, count, configs[i], spec.method, metrics);
        result.cells[i].index = i;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(spec.jobs, configs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::optional<std::size_t> best;
  for (SweepCell& cell : result.cells) {
    cell.viable = cell.objective.has_value() && cell.success_rate >= spec.success_floor;
    if (cell.viable && (!best || *cell.objective > *result.cells[*best].objective)) best = cell.index;
  }
  if (!best) {
    throw NoViableConfigError("sweep: no configuration reached the success floor " +
                              format_real(spec.success_floor) + " over " + std::to_string(configs.size()) +
                              " cells");
  }
  result.best = *best;
  return result;
}

nlohmann::json attack_config_json(const AttackConfig& c) {
  nlohmann::json j = {{"lambda1", c.lambda1},
                      {"lambda2", c.lambda2},
                      {"lambda3", c.lambda3},
                      {"lambda4", c.lambda4},
                      {"alpha", c.alpha},
                      {"epsilon", c.epsilon},
                      {"max_iterations", c.max_iterations},
                      {"confidence_threshold", nullptr},
                      {"mode", c.mode.targeted ? "targeted" : "non_targeted"},
                      {"target_label", nullptr},
                      {"stop_rule", stop_rule_name(c.stop_rule)},
                      {"overshoot", c.overshoot},
                      {"intensity_unit", c.intensity_unit}};
  if (c.confidence_threshold) j["confidence_threshold"] = *c.confidence_threshold;
  if (c.mode.targeted) j["target_label"] = c.mode.target_label;
  return j;
}

std::string sweep_csv(const SweepResult& result) {
  CsvTable t({std::string(kCsvSchemaTag), "cell", "method", "lambda1", "lambda2", "lambda3", "lambda4", "alpha",
              "epsilon", "images", "success_rate", "mean_psnr", "mean_ssim", "mean_iterations", "objective", "viable",
              "best"});
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  for (const SweepCell& c : result.cells) {
    t.add(kCsvSchemaValue)
        .add(c.index)
        .add(method_name(result.method))
        .add(c.config.lambda1)
        .add(c.config.lambda2)
        .add(c.config.lambda3)
        .add(c.config.lambda4)
        .add(c.config.alpha)
        .add(c.config.epsilon)
        .add(c.records.size())
        .add(c.success_rate)
        .add(opt(c.mean_psnr))
        .add(opt(c.mean_ssim))
        .add(opt(c.mean_iterations))
        .add(opt(c.objective))
        .add(c.viable)
        .add(c.index == result.best);
    t.end_row();
  }
  return t.str();
}

nlohmann::json sweep_json(const SweepResult& result) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json { return v ? nlohmann::json(*v) : nullptr; };
  nlohmann::json cells = nlohmann::json::array();
  for (const SweepCell& c : result.cells) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : c.records) {
      records.push_back({{"index", r.index},
                         {"success", r.success},
                         {"iterations", r.iterations},
                         {"psnr", r.success ? nlohmann::json(r.psnr) : nullptr},
                         {"ssim", r.success ? nlohmann::json(r.ssim) : nullptr},
                         {"error", r.error.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.error)}});
    }
    cells.push_back({{"cell", c.index},
                     {"config", attack_config_json(c.config)},
                     {"success_rate", c.success_rate},
                     {"mean_psnr", opt(c.mean_psnr)},
                     {"mean_ssim", opt(c.mean_ssim)},
                     {"mean_iterations", opt(c.mean_iterations)},
                     {"objective", opt(c.objective)},
                     {"viable", c.viable},
                     {"records", records}});
  }
  return {{"method", method_name(result.method)},
          {"success_floor", result.success_floor},
          {"validation_count", result.validation_count},
          {"best_cell", result.best},
          {"cells", cells}};
}

}  // namespace jnd
