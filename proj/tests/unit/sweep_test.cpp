#include <doctest.h>

#include <cmath>

#include "jnd/csv.hpp"
#include "jnd/error.hpp"
#include "jnd/sweep.hpp"
#include "support.hpp"

using namespace jnd;

namespace {

// SSIM needs at least an 11x11 window.
constexpr std::size_t kSide = 16;

const Model& sweep_model() { return test::trained_small_model(kSide); }

Dataset validation_set(std::size_t n) {
  const Model& model = sweep_model();
  const Dataset& all = test::small_test_set(kSide);
  Dataset v;
  v.class_names = all.class_names;
  for (std::size_t i = 0; i < all.size() && v.size() < n; ++i) {
    if (model.predict(all.images[i]).label != all.labels[i]) continue;
    v.images.push_back(all.images[i]);
    v.labels.push_back(all.labels[i]);
  }
  REQUIRE(v.size() == n);
  return v;
}

SweepSpec jnd_spec() {
  SweepSpec s;
  s.method = AttackMethod::jnd;
  s.base = preset_config(AttackMethod::jnd);
  s.base.max_iterations = 200;
  s.validation_count = 10;
  return s;
}

}  // namespace

TEST_SUITE("sweep") {
  TEST_CASE("grid enumeration") {
    SweepSpec s = jnd_spec();
    s.lambda1 = {1, 10};
    s.lambda4 = {1, 10, 100};
    s.alpha = {0.01, 0.05};
    CHECK(s.grid_size() == 12);
    const auto cells = s.cells();
    REQUIRE(cells.size() == 12);
    CHECK(cells[0].lambda1 == 1);
    CHECK(cells[0].lambda4 == 1);
    CHECK(cells[1].alpha == 0.05);
    CHECK(cells[11].lambda1 == 10);
    CHECK(cells[11].lambda4 == 100);
    s.method = AttackMethod::fgsm;
    s.epsilon = {0.1, 0.2, 0.3};
    CHECK(s.grid_size() == 3);
    CHECK(s.cells()[2].epsilon == 0.3);
    s.method = AttackMethod::deepfool;
    CHECK(s.grid_size() == 1);
  }

  TEST_CASE("spec validation") {
    SweepSpec s = jnd_spec();
    s.alpha = {};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = jnd_spec();
    s.success_floor = 1.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = jnd_spec();
    s.lambda2 = {-1};
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }

  TEST_CASE("objective rewards quality and speed") {
    const std::vector<SweepImageRecord> base = {{0, true, 4, 30.0, 0.9, ""}, {1, true, 6, 32.0, 0.8, ""}};
    std::vector<SweepImageRecord> better = base;
    for (auto& r : better) {
      r.psnr += 1.0;
      r.ssim += 0.05;
      r.iterations -= 1;
    }
    CHECK(*sweep_objective(better) > *sweep_objective(base));
    CHECK(*sweep_objective(base) == doctest::Approx(31.0 * 0.85 / 5.0));
    CHECK_FALSE(sweep_objective({{0, false, 9, 0, 0, ""}}).has_value());
  }

  TEST_CASE("single cell wins") {
    const SweepResult r = run_sweep(sweep_model(), validation_set(10), jnd_spec());
    REQUIRE(r.cells.size() == 1);
    CHECK(r.best == 0);
    CHECK(r.cells[0].viable);
  }

  TEST_CASE("ties go to the lower cell") {
    SweepSpec s = jnd_spec();
    s.method = AttackMethod::fgv;
    s.base = preset_config(AttackMethod::fgv);
    s.epsilon = {0.4, 0.4};
    const SweepResult r = run_sweep(sweep_model(), validation_set(10), s);
    CHECK(r.cells[0].objective == r.cells[1].objective);
    CHECK(r.best == 0);
  }

  TEST_CASE("dominant cell wins") {
    SweepSpec s = jnd_spec();
    s.alpha = {0.005, 0.05, 0.2};
    s.success_floor = 0.5;
    const SweepResult r = run_sweep(sweep_model(), validation_set(10), s);
    for (const auto& a : r.cells) {
      for (const auto& b : r.cells) {
        if (!a.viable || !b.viable) continue;
        const bool dominates = *a.mean_psnr >= *b.mean_psnr && *a.mean_ssim >= *b.mean_ssim &&
                               *a.mean_iterations <= *b.mean_iterations &&
                               (*a.mean_psnr > *b.mean_psnr || *a.mean_ssim > *b.mean_ssim ||
                                *a.mean_iterations < *b.mean_iterations);
        if (dominates) {
          CHECK(*a.objective > *b.objective);
          CHECK(r.best != b.index);
        }
      }
    }
    for (const auto& c : r.cells) {
      if (c.viable) CHECK(*r.best_cell().objective >= *c.objective);
    }
  }

  TEST_CASE("best cell survives recomputation from the records") {
    SweepSpec s = jnd_spec();
    s.lambda1 = {1, 10};
    s.lambda4 = {1, 10};
    s.success_floor = 0.0;
    s.jobs = 3;
    const SweepResult r = run_sweep(sweep_model(), validation_set(10), s);
    const nlohmann::json j = sweep_json(r);
    std::optional<double> best;
    for (const auto& cell : j.at("cells")) {
      double p = 0, q = 0, k = 0;
      std::size_t n = 0;
      for (const auto& rec : cell.at("records")) {
        if (!rec.at("success").get<bool>()) continue;
        p += rec.at("psnr").get<double>();
        q += rec.at("ssim").get<double>();
        k += rec.at("iterations").get<double>();
        ++n;
      }
      if (n == 0) {
        CHECK(cell.at("objective").is_null());
        continue;
      }
      const double recomputed = (p / n) * (q / n) / (k / n);
      CHECK(std::abs(recomputed - cell.at("objective").get<double>()) <= 1e-9);
      if (cell.at("viable").get<bool>() && (!best || recomputed > *best)) best = recomputed;
    }
    REQUIRE(best.has_value());
    CHECK(std::abs(*r.best_cell().objective - *best) <= 1e-9);
  }

  TEST_CASE("serial and parallel sweeps agree") {
    SweepSpec s = jnd_spec();
    s.alpha = {0.02, 0.05, 0.1};
    s.success_floor = 0.0;
    const Dataset v = validation_set(6);
    const SweepResult serial = run_sweep(sweep_model(), v, s);
    s.jobs = 3;
    const SweepResult parallel = run_sweep(sweep_model(), v, s);
    CHECK(sweep_csv(serial) == sweep_csv(parallel));
    CHECK(sweep_json(serial) == sweep_json(parallel));
  }

  TEST_CASE("no viable configuration") {
    SweepSpec s = jnd_spec();
    s.alpha = {0.0};
    CHECK_THROWS_AS(run_sweep(sweep_model(), validation_set(5), s), NoViableConfigError);
  }

  TEST_CASE("validation images must be classified correctly") {
    Dataset v = validation_set(5);
    v.labels[2] = (v.labels[2] + 1) % 3;
    CHECK_THROWS_AS(run_sweep(sweep_model(), v, jnd_spec()), PreconditionError);
    CHECK_THROWS_AS(run_sweep(sweep_model(), Dataset{}, jnd_spec()), InputError);
  }

  TEST_CASE("csv layout") {
    const SweepResult r = run_sweep(sweep_model(), validation_set(5), jnd_spec());
    const auto rows = parse_csv(sweep_csv(r));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][0] == kCsvSchemaTag);
    CHECK(rows[1][0] == kCsvSchemaValue);
    CHECK(rows[0].size() == rows[1].size());
  }
}
