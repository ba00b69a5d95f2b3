#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "jnd/error.hpp"
#include "jnd/stats.hpp"
#include "support.hpp"

using namespace jnd;

namespace {

Image row(const std::vector<double>& values) { return Image({1, values.size(), 1}, values); }

// Exact Gaussian mass of the estimate that falls inside its own grid.
double grid_mass(const std::vector<double>& samples, const DensityEstimate& d) {
  const double lo = d.grid.front(), hi = d.grid.back(), h = d.bandwidth;
  double m = 0.0;
  for (double v : samples) m += 0.5 * (std::erf((hi - v) / (h * std::sqrt(2.0))) - std::erf((lo - v) / (h * std::sqrt(2.0))));
  return m / static_cast<double>(samples.size());
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("histogram examples") {
    const ColorHistogram seven = color_histogram(make_image(4, 4, 1, 7.0));
    for (std::size_t b = 0; b < kHistogramBins; ++b) CHECK(seven.channels[0][b] == (b == 7 ? 1.0 : 0.0));
    const ColorHistogram ends = color_histogram(row({0.0, 255.0}));
    CHECK(ends.channels[0][0] == 0.5);
    CHECK(ends.channels[0][255] == 0.5);
    CHECK_THROWS_AS(color_histogram(row({-1.0, 3.0})), InputError);
    CHECK_THROWS_AS(color_histogram(row({256.0})), InputError);
  }

  TEST_CASE("histograms are distributions") {
    Rng rng(1);
    for (int t = 0; t < 10; ++t) {
      const ColorHistogram h = color_histogram(test::random_image(7, 9, 3, rng));
      REQUIRE(h.channels.size() == 3);
      for (const auto& ch : h.channels) {
        double s = 0.0;
        for (double v : ch) {
          CHECK(v >= 0.0);
          s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
      }
    }
  }

  TEST_CASE("KL of two-bin distributions") {
    const ColorHistogram p = color_histogram(row({0, 1}));
    const ColorHistogram q = color_histogram(row({0, 0, 0, 0, 0, 0, 0, 0, 0, 1}));
    const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    CHECK(std::abs(kl_divergence(p, q) - expected) <= 1e-4);
    CHECK(std::abs(kl_divergence(p, q, 0.0) - expected) <= 1e-12);
    CHECK(std::abs(expected - 0.5108) <= 1e-4);
  }

  TEST_CASE("KL is non-negative and vanishes on equal histograms") {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
      const Image a = test::random_image(6, 6, 3, rng), b = test::random_image(6, 6, 3, rng);
      const ColorHistogram ha = color_histogram(a), hb = color_histogram(b);
      CHECK(kl_divergence(ha, hb) >= 0.0);
      CHECK(kl_divergence(ha, ha, 0.0) <= 1e-12);
      // Smoothing mass on the 256 bins leaves a residue of order 256 * 1e-10 per channel.
      CHECK(kl_divergence(ha, ha) <= 1e-7);
    }
    CHECK_THROWS_AS(kl_divergence(color_histogram(make_image(2, 2, 3)), color_histogram(make_image(2, 2, 1))),
                    DimensionError);
  }

  TEST_CASE("KDE rejects tiny samples") {
    CHECK_THROWS_AS(kde({1.0}), InputError);
    CHECK_THROWS_AS(kde({}), InputError);
    CHECK_THROWS_AS(kde({1.0, 2.0}, -1.0), InputError);
    CHECK_THROWS_AS(kde({1.0, 2.0}, std::nullopt, 1), ConfigError);
  }

  TEST_CASE("KDE concentrates on a repeated value") {
    const DensityEstimate d = kde(std::vector<double>(20, 3.5), 1e-3, 512);
    const double cell = d.grid[1] - d.grid[0];
    CHECK(std::abs(d.mode() - 3.5) <= cell);
    const DensityEstimate auto_bw = kde(std::vector<double>(20, 3.5));
    CHECK(std::abs(auto_bw.mode() - 3.5) <= auto_bw.grid[1] - auto_bw.grid[0]);
    CHECK(std::abs(auto_bw.integral() - grid_mass(std::vector<double>(20, 3.5), auto_bw)) <= 1e-3);
  }

  TEST_CASE("KDE of standard normal samples") {
    Rng rng(3);
    std::vector<double> s(10000);
    for (double& v : s) v = rng.normal();
    const DensityEstimate d = kde(s);
    CHECK(std::abs(d.mode()) < 0.1);
    CHECK(std::abs(d.integral() - grid_mass(s, d)) <= 1e-3);
    const double sd = mean_sd(s).sd;
    CHECK(d.bandwidth == doctest::Approx(1.06 * sd * std::pow(10000.0, -0.2)).epsilon(1e-12));
  }

  TEST_CASE("KDE integrates to one") {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
      std::vector<double> s(2 + static_cast<std::size_t>(rng.index(60)));
      for (double& v : s) v = rng.uniform(-50.0, 300.0) * (rng.uniform() < 0.2 ? 10.0 : 1.0);
      const DensityEstimate a = kde(s);
      CHECK(std::abs(a.integral() - grid_mass(s, a)) <= 1e-3);
      CHECK(a.integral() >= 0.99);
      // Bandwidth 2 over a range of ~3000 needs a grid step below h.
      const DensityEstimate b = kde(s, 2.0, 8192);
      CHECK(std::abs(b.integral() - grid_mass(s, b)) <= 1e-3);
    }
  }

  TEST_CASE("mean and sample standard deviation") {
    const Moments1d m = mean_sd({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
    CHECK(m.mean == 5.0);
    CHECK(m.sd == doctest::Approx(std::sqrt(32.0 / 7.0)));
    CHECK_THROWS_AS(mean_sd({}), InputError);
  }

  TEST_CASE("identical pairs give zero samples") {
    Rng rng(5);
    MethodPopulation pop{"same", {}, {}};
    for (int i = 0; i < 4; ++i) {
      pop.originals.push_back(test::random_image(5, 5, 3, rng));
      pop.adversarials.push_back(pop.originals.back());
    }
    const StatsReport r = population_compare({pop});
    REQUIRE(r.methods.size() == 1);
    CHECK(r.methods[0].l2_samples.size() == 4);
    for (double v : r.methods[0].l2_samples) CHECK(v == 0.0);
    for (double v : r.methods[0].kl_samples) CHECK(v <= 1e-7);
  }

  TEST_CASE("population comparison ignores input order") {
    Rng rng(6);
    std::vector<MethodPopulation> pops;
    for (const char* name : {"b", "a", "c"}) {
      MethodPopulation p{name, {}, {}};
      for (int i = 0; i < 6; ++i) {
        const Image o = test::random_image(6, 6, 3, rng);
        Image adv = o;
        for (std::size_t k = 0; k < adv.size(); ++k) adv[k] = std::clamp(adv[k] + rng.normal(0, 9.0), 0.0, 255.0);
        p.originals.push_back(o);
        p.adversarials.push_back(adv);
      }
      pops.push_back(p);
    }
    const auto reference = population_compare(pops).to_json();
    std::reverse(pops.begin(), pops.end());
    for (auto& p : pops) {
      std::reverse(p.originals.begin(), p.originals.end());
      std::reverse(p.adversarials.begin(), p.adversarials.end());
    }
    CHECK(population_compare(pops).to_json() == reference);
  }

  TEST_CASE("population comparison errors and bookkeeping") {
    CHECK_THROWS_AS(population_compare({}), InputError);
    CHECK_THROWS_AS(population_compare({MethodPopulation{"x", {}, {}}}), InputError);
    MethodPopulation uneven{"x", {make_image(2, 2, 3)}, {}};
    CHECK_THROWS_AS(population_compare({uneven}), InputError);
    CHECK_THROWS_AS(summarize_samples({{"a", {0.1, 0.2}, {1, 2}}, {"a", {0.1, 0.2}, {1, 2}}}), InputError);
    const StatsReport r = summarize_samples({{"low", {0.1, 0.3}, {1.0, 3.0}}, {"high", {0.1, 0.2}, {5.0, 9.0}}});
    CHECK(r.sharpest_l2_method == "low");
    CHECK(r.methods[0].method == "high");
    CHECK(r.methods[1].l2.mean == 2.0);
  }
}
