#pragma once

// Full-reference image quality measures and perturbation norms. Every
// function takes (reference, distorted) images of identical shape with
// intensities in [0, 255]. Multi-channel inputs are scored per channel and
// the channel scores averaged.

#include <cstddef>

#include <json.hpp>

#include "jnd/tensor.hpp"

namespace jnd {

struct MetricsConfig {
  double peak = 255.0;
  double psnr_min_mse = 1e-15;
  std::size_t ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  std::size_t uqi_window = 8;
  std::size_t scc_window = 8;
  std::size_t vifp_scales = 4;
  double vifp_noise_variance = 2.0;

  nlohmann::json to_json() const;
};

// 10 log10(peak^2 / max(MSE, psnr_min_mse)).
double psnr(const Image& a, const Image& b, const MetricsConfig& config = {});
// PSNR of two identical images.
double psnr_cap(const MetricsConfig& config = {});

// Mean SSIM over every valid Gaussian-weighted window. Throws DimensionError
// when either spatial extent is below the window.
double ssim(const Image& a, const Image& b, const MetricsConfig& config = {});

// Universal quality index over uniform sliding windows. A window where both
// patches are flat scores 1 if the patches are equal and 0 otherwise.
double uqi(const Image& a, const Image& b, const MetricsConfig& config = {});

// Windowed correlation of the Laplacian-filtered images (reflected borders).
// Flat windows follow the uqi rule; one flat patch scores 0.
double scc(const Image& a, const Image& b, const MetricsConfig& config = {});

// Pixel-domain visual information fidelity of `distorted` against
// `reference`. Scales whose window no longer fits the downsampled image are
// dropped; the first one must fit (min side 17 with the default 4 scales).
double vifp(const Image& reference, const Image& distorted, const MetricsConfig& config = {});

struct LpDistances {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

// Raw pixel units: sum |d|, sqrt(sum d^2), max |d|.
LpDistances lp_distances(const Image& a, const Image& b);

struct QualityReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double uqi = 0.0;
  double scc = 0.0;
  double vifp = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
  // l1 and l2 divided by the scalar count H*W*C.
  double l1_per_pixel = 0.0;
  double l2_per_pixel = 0.0;

  nlohmann::json to_json() const;
};

QualityReport quality_report(const Image& original, const Image& adversarial, const MetricsConfig& config = {});

}  // namespace jnd
