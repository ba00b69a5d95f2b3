#pragma once

// Population statistics over attack outputs: per-channel colour histograms,
// their KL divergence, Gaussian kernel density estimates, and a per-method
// summary of KL and L2 samples.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jnd/tensor.hpp"

namespace jnd {

inline constexpr std::size_t kHistogramBins = 256;
inline constexpr double kKlSmoothing = 1e-10;

struct ColorHistogram {
  // One normalised 256-bin histogram per channel.
  std::vector<std::array<double, kHistogramBins>> channels;
};

// Bin floor(p), with 255 in bin 255. Throws InputError for pixels outside
// [0, 255] or non-finite ones.
ColorHistogram color_histogram(const Image& image);

// sum over channels of sum_r p(r) log(p(r) / q(r)), natural log. `smoothing`
// is added to every q bin and q renormalised first; bins with p(r) = 0
// contribute 0. Throws DimensionError on a channel-count mismatch.
double kl_divergence(const ColorHistogram& p, const ColorHistogram& q, double smoothing = kKlSmoothing);

struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;

  // Trapezoidal integral over the grid.
  double integral() const;
  // Grid point with the largest density (first one on ties).
  double mode() const;
};

// 1.06 * sd * n^(-1/5) with the sample standard deviation. Throws InputError
// for fewer than two samples.
double silverman_bandwidth(const std::vector<double>& samples);

// Gaussian KDE evaluated on `resolution` evenly spaced points spanning
// [min - 3h, max + 3h]. Without a bandwidth, Silverman's rule is used; a
// zero-spread sample falls back to 1e-3 * max(1, |value|). Throws
// InputError for fewer than two samples or a non-positive bandwidth, and
// ConfigError for resolution < 2.
DensityEstimate kde(const std::vector<double>& samples, std::optional<double> bandwidth = std::nullopt,
                    std::size_t resolution = 512);

struct Moments1d {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for one sample
};
Moments1d mean_sd(const std::vector<double>& samples);

// Original/adversarial pairs of the successful attacks of one method.
struct MethodPopulation {
  std::string method;
  std::vector<Image> originals;
  std::vector<Image> adversarials;
};

struct MethodStats {
  std::string method;
  std::vector<double> kl_samples;
  std::vector<double> l2_samples;
  Moments1d kl;
  Moments1d l2;
  // Absent when the population holds fewer than two samples.
  std::optional<DensityEstimate> kl_density;
  std::optional<DensityEstimate> l2_density;
};

struct StatsReport {
  std::vector<MethodStats> methods;  // sorted by method name
  std::string sharpest_l2_method;    // smallest mean L2
  double kl_smoothing = kKlSmoothing;

  nlohmann::json to_json() const;
};

// Precomputed per-image samples of one method.
struct MethodSamples {
  std::string method;
  std::vector<double> kl_samples;
  std::vector<double> l2_samples;
};

// Samples are sorted before aggregation so the report does not depend on the
// order of the inputs. Throws InputError for an empty population, mismatched
// pair or sample counts, or a repeated method name.
StatsReport population_compare(const std::vector<MethodPopulation>& populations,
                               std::optional<double> bandwidth = std::nullopt, std::size_t resolution = 512);
StatsReport summarize_samples(std::vector<MethodSamples> samples, std::optional<double> bandwidth = std::nullopt,
                              std::size_t resolution = 512);

// KL divergence between the colour histograms of an original and its adversarial image.
double histogram_kl(const Image& original, const Image& adversarial);

}  // namespace jnd
