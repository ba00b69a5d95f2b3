#include "jnd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jnd/error.hpp"
#include "jnd/simd/kernels.hpp"

namespace jnd {

ColorHistogram color_histogram(const Image& image) {
  require_image(image, "color_histogram");
  const std::size_t channels = image.dim(2);
  const std::size_t pixels = image.dim(0) * image.dim(1);
  if (pixels == 0) throw InputError("color_histogram: empty image");
  ColorHistogram h;
  h.channels.assign(channels, {});
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = image[i];
    if (!(v >= 0.0 && v <= 255.0)) {
      throw InputError("color_histogram: pixel " + std::to_string(v) + " outside [0, 255]; clamp first");
    }
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>(std::floor(v)), kHistogramBins - 1);
    h.channels[i % channels][bin] += 1.0;
  }
  for (auto& ch : h.channels) {
    for (double& b : ch) b /= static_cast<double>(pixels);
  }
  return h;
}

double kl_divergence(const ColorHistogram& p, const ColorHistogram& q, double smoothing) {
  if (p.channels.size() != q.channels.size()) {
    throw DimensionError("kl_divergence: " + std::to_string(p.channels.size()) + " vs " +
                         std::to_string(q.channels.size()) + " channels");
  }
  if (!(smoothing >= 0.0)) throw ConfigError("kl_divergence: smoothing must be non-negative");
  double total = 0.0;
  for (std::size_t c = 0; c < p.channels.size(); ++c) {
    const auto& pc = p.channels[c];
    const auto& qc = q.channels[c];
    double q_mass = 0.0;
    for (double v : qc) q_mass += v + smoothing;
    double kl = 0.0;
    for (std::size_t r = 0; r < kHistogramBins; ++r) {
      if (pc[r] <= 0.0) continue;
      kl += pc[r] * std::log(pc[r] * q_mass / (qc[r] + smoothing));
    }
    // Rounding can leave a tiny negative total for near-identical histograms.
    total += std::max(kl, 0.0);
  }
  return total;
}

double DensityEstimate::integral() const {
  double s = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
  return s;
}

double DensityEstimate::mode() const {
  if (grid.empty()) throw InputError("mode of an empty density estimate");
  return grid[static_cast<std::size_t>(std::max_element(density.begin(), density.end()) - density.begin())];
}

Moments1d mean_sd(const std::vector<double>& samples) {
  if (samples.empty()) throw InputError("mean_sd: no samples");
  Moments1d m;
  for (double v : samples) m.mean += v;
  m.mean /= static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - m.mean) * (v - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  }
  return m;
}

double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.size() < 2) throw InputError("kde needs at least two samples");
  return 1.06 * mean_sd(samples).sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

DensityEstimate kde(const std::vector<double>& samples, std::optional<double> bandwidth, std::size_t resolution) {
  if (samples.size() < 2) throw InputError("kde needs at least two samples, got " + std::to_string(samples.size()));
  if (resolution < 2) throw ConfigError("kde grid resolution must be at least 2");
  for (double v : samples) {
    if (!std::isfinite(v)) throw InputError("kde: non-finite sample");
  }
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  double h = 0.0;
  if (bandwidth) {
    h = *bandwidth;
    if (!(h > 0.0) || !std::isfinite(h)) throw InputError("kde bandwidth must be positive");
  } else {
    h = silverman_bandwidth(samples);
    if (h <= 0.0) h = 1e-3 * std::max(1.0, std::abs(*lo_it));
  }

  DensityEstimate est;
  est.bandwidth = h;
  const double lo = *lo_it - 3.0 * h, hi = *hi_it + 3.0 * h;
  est.grid.resize(resolution);
  est.density.resize(resolution);
  const double step = (hi - lo) / static_cast<double>(resolution - 1);
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < resolution; ++i) {
    const double g = lo + step * static_cast<double>(i);
    double s = 0.0;
    for (double v : samples) {
      const double z = (g - v) / h;
      s += std::exp(-0.5 * z * z);
    }
    est.grid[i] = g;
    est.density[i] = s * norm;
  }
  return est;
}

nlohmann::json StatsReport::to_json() const {
  auto density_json = [](const std::optional<DensityEstimate>& d) -> nlohmann::json {
    if (!d) return nullptr;
    return {{"bandwidth", d->bandwidth}, {"mode", d->mode()}, {"grid", d->grid}, {"density", d->density}};
  };
  nlohmann::json out = {{"kl_convention", "sum over channels, natural log"},
                        {"kl_smoothing", kl_smoothing},
                        {"sharpest_l2_method", sharpest_l2_method},
                        {"methods", nlohmann::json::array()}};
  for (const MethodStats& m : methods) {
    out["methods"].push_back({{"method", m.method},
                              {"count", m.l2_samples.size()},
                              {"kl_mean", m.kl.mean},
                              {"kl_sd", m.kl.sd},
                              {"l2_mean", m.l2.mean},
                              {"l2_sd", m.l2.sd},
                              {"kl_samples", m.kl_samples},
                              {"l2_samples", m.l2_samples},
                              {"kl_density", density_json(m.kl_density)},
                              {"l2_density", density_json(m.l2_density)}});
  }
  return out;
}

double histogram_kl(const Image& original, const Image& adversarial) {
  require_same_shape(original, adversarial, "histogram_kl");
  return kl_divergence(color_histogram(original), color_histogram(adversarial));
}

StatsReport population_compare(const std::vector<MethodPopulation>& populations, std::optional<double> bandwidth,
                               std::size_t resolution) {
  std::vector<MethodSamples> samples;
  for (const MethodPopulation& pop : populations) {
    if (pop.originals.size() != pop.adversarials.size()) {
      throw InputError("population_compare: method '" + pop.method + "' has mismatched pair counts");
    }
    MethodSamples ms{pop.method, {}, {}};
    for (std::size_t i = 0; i < pop.originals.size(); ++i) {
      const Image& o = pop.originals[i];
      const Image& a = pop.adversarials[i];
      ms.kl_samples.push_back(histogram_kl(o, a));
      ms.l2_samples.push_back(std::sqrt(simd::squared_distance(o.data().data(), a.data().data(), o.size())));
    }
    samples.push_back(std::move(ms));
  }
  return summarize_samples(std::move(samples), bandwidth, resolution);
}

StatsReport summarize_samples(std::vector<MethodSamples> samples, std::optional<double> bandwidth,
                              std::size_t resolution) {
  if (samples.empty()) throw InputError("population_compare: no methods");
  StatsReport report;
  for (MethodSamples& in : samples) {
    if (in.l2_samples.empty()) throw InputError("population_compare: method '" + in.method + "' has no samples");
    if (in.kl_samples.size() != in.l2_samples.size()) {
      throw InputError("population_compare: method '" + in.method + "' has mismatched sample counts");
    }
    MethodStats ms;
    ms.method = in.method;
    ms.kl_samples = std::move(in.kl_samples);
    ms.l2_samples = std::move(in.l2_samples);
    std::sort(ms.kl_samples.begin(), ms.kl_samples.end());
    std::sort(ms.l2_samples.begin(), ms.l2_samples.end());
    ms.kl = mean_sd(ms.kl_samples);
    ms.l2 = mean_sd(ms.l2_samples);
    if (ms.l2_samples.size() >= 2) {
      ms.kl_density = kde(ms.kl_samples, bandwidth, resolution);
      ms.l2_density = kde(ms.l2_samples, bandwidth, resolution);
    }
    report.methods.push_back(std::move(ms));
  }
  std::sort(report.methods.begin(), report.methods.end(),
            [](const MethodStats& a, const MethodStats& b) { return a.method < b.method; });
  for (std::size_t i = 1; i < report.methods.size(); ++i) {
    if (report.methods[i].method == report.methods[i - 1].method) {
      throw InputError("population_compare: method '" + report.methods[i].method + "' appears twice");
    }
  }
  const auto best = std::min_element(report.methods.begin(), report.methods.end(),
                                     [](const MethodStats& a, const MethodStats& b) { return a.l2.mean < b.l2.mean; });
  report.sharpest_l2_method = best->method;
  return report;
}

}  // namespace jnd
