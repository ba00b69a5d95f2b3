#include "jnd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "jnd/error.hpp"
#include "jnd/simd/kernels.hpp"

namespace jnd {

namespace {

// One channel of an image as a row-major H x W plane.
struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;

  double operator()(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

Plane channel(const Image& img, std::size_t c) {
  Plane p{img.dim(0), img.dim(1), {}};
  p.v.resize(p.h * p.w);
  for (std::size_t y = 0; y < p.h; ++y) {
    for (std::size_t x = 0; x < p.w; ++x) p.v[y * p.w + x] = img.at(y, x, c);
  }
  return p;
}

void check_pair(const Image& a, const Image& b, const char* what) {
  require_image(a, what);
  require_same_shape(a, b, what);
}

void check_window(const Image& a, std::size_t window, const char* what) {
  if (window == 0) throw ConfigError(std::string(what) + ": window must be positive");
  if (a.dim(0) < window || a.dim(1) < window) {
    throw DimensionError(std::string(what) + ": image " + shape_string(a.shape()) + " is smaller than the " +
                         std::to_string(window) + "x" + std::to_string(window) + " window");
  }
}

std::vector<double> gaussian_window(std::size_t n, double sigma) {
  std::vector<double> k(n * n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
      k[y * n + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += k[y * n + x];
    }
  }
  for (double& v : k) v /= total;
  return k;
}

// Weighted first and second moments of two patches.
struct Moments {
  double mu_a = 0.0, mu_b = 0.0, var_a = 0.0, var_b = 0.0, cov = 0.0;
};

// Two-pass moments of the n x n patches at (y0, x0) under normalised weights.
Moments window_moments(const Plane& a, const Plane& b, std::size_t y0, std::size_t x0, std::size_t n,
                       const std::vector<double>& weights) {
  Moments m;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double wt = weights[y * n + x];
      m.mu_a += wt * a(y0 + y, x0 + x);
      m.mu_b += wt * b(y0 + y, x0 + x);
    }
  }
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double wt = weights[y * n + x];
      const double da = a(y0 + y, x0 + x) - m.mu_a, db = b(y0 + y, x0 + x) - m.mu_b;
      m.var_a += wt * da * da;
      m.var_b += wt * db * db;
      m.cov += wt * da * db;
    }
  }
  return m;
}

bool patch_flat(const Plane& p, std::size_t y0, std::size_t x0, std::size_t n) {
  const double first = p(y0, x0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      if (p(y0 + y, x0 + x) != first) return false;
    }
  }
  return true;
}

// Mean over channels of the mean over valid window positions of score().
template <typename Score>
double windowed_mean(const Image& a, const Image& b, std::size_t n, Score score) {
  double total = 0.0;
  for (std::size_t c = 0; c < a.dim(2); ++c) {
    const Plane pa = channel(a, c), pb = channel(b, c);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + n <= pa.h; ++y) {
      for (std::size_t x = 0; x + n <= pa.w; ++x) {
        sum += score(pa, pb, y, x);
        ++count;
      }
    }
    total += sum / static_cast<double>(count);
  }
  return total / static_cast<double>(a.dim(2));
}

// 3x3 Laplacian [[0,1,0],[1,-4,1],[0,1,0]] with half-sample symmetric borders.
Plane laplacian(const Plane& p) {
  auto reflect = [](std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    if (m == 1) return std::size_t{0};
    if (i < 0) i = -i - 1;
    if (i >= m) i = 2 * m - i - 1;
    return static_cast<std::size_t>(i);
  };
  Plane out{p.h, p.w, std::vector<double>(p.v.size())};
  for (std::size_t y = 0; y < p.h; ++y) {
    for (std::size_t x = 0; x < p.w; ++x) {
      const auto yi = static_cast<std::ptrdiff_t>(y), xi = static_cast<std::ptrdiff_t>(x);
      out.v[y * p.w + x] = p(reflect(yi - 1, p.h), x) + p(reflect(yi + 1, p.h), x) + p(y, reflect(xi - 1, p.w)) +
                           p(y, reflect(xi + 1, p.w)) - 4.0 * p(y, x);
    }
  }
  return out;
}

// Valid-mode correlation with an n x n kernel.
Plane filter_valid(const Plane& p, const std::vector<double>& k, std::size_t n) {
  Plane out{p.h - n + 1, p.w - n + 1, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) s += k[i * n + j] * p(y + i, x + j);
      }
      out.v[y * out.w + x] = s;
    }
  }
  return out;
}

Plane downsample2(const Plane& p) {
  Plane out{(p.h + 1) / 2, (p.w + 1) / 2, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) out.v[y * out.w + x] = p(2 * y, 2 * x);
  }
  return out;
}

}  // namespace

nlohmann::json MetricsConfig::to_json() const {
  return {{"peak", peak},
          {"psnr_min_mse", psnr_min_mse},
          {"ssim_window", ssim_window},
          {"ssim_sigma", ssim_sigma},
          {"ssim_k1", ssim_k1},
          {"ssim_k2", ssim_k2},
          {"uqi_window", uqi_window},
          {"scc_window", scc_window},
          {"scc_filter", "laplacian3x3"},
          {"vifp_scales", vifp_scales},
          {"vifp_noise_variance", vifp_noise_variance},
          {"channel_reduction", "mean"}};
}

double psnr(const Image& a, const Image& b, const MetricsConfig& config) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw DimensionError("psnr: empty images");
  const double mse = simd::squared_distance(a.data().data(), b.data().data(), a.size()) / static_cast<double>(a.size());
  return 10.0 * std::log10(config.peak * config.peak / std::max(mse, config.psnr_min_mse));
}

double psnr_cap(const MetricsConfig& config) {
  return 10.0 * std::log10(config.peak * config.peak / config.psnr_min_mse);
}

double ssim(const Image& a, const Image& b, const MetricsConfig& config) {
  check_pair(a, b, "ssim");
  check_window(a, config.ssim_window, "ssim");
  const std::size_t n = config.ssim_window;
  const auto weights = gaussian_window(n, config.ssim_sigma);
  const double c1 = std::pow(config.ssim_k1 * config.peak, 2), c2 = std::pow(config.ssim_k2 * config.peak, 2);
  return windowed_mean(a, b, n, [&](const Plane& pa, const Plane& pb, std::size_t y, std::size_t x) {
    const Moments m = window_moments(pa, pb, y, x, n, weights);
    return ((2.0 * m.mu_a * m.mu_b + c1) * (2.0 * m.cov + c2)) /
           ((m.mu_a * m.mu_a + m.mu_b * m.mu_b + c1) * (m.var_a + m.var_b + c2));
  });
}

double uqi(const Image& a, const Image& b, const MetricsConfig& config) {
  check_pair(a, b, "uqi");
  check_window(a, config.uqi_window, "uqi");
  const std::size_t n = config.uqi_window;
  const std::vector<double> weights(n * n, 1.0 / static_cast<double>(n * n));
  return windowed_mean(a, b, n, [&](const Plane& pa, const Plane& pb, std::size_t y, std::size_t x) {
    const bool fa = patch_flat(pa, y, x, n), fb = patch_flat(pb, y, x, n);
    if (fa && fb) return pa(y, x) == pb(y, x) ? 1.0 : 0.0;
    const Moments m = window_moments(pa, pb, y, x, n, weights);
    const double mean_sq = m.mu_a * m.mu_a + m.mu_b * m.mu_b;
    const double structure = 2.0 * m.cov / (m.var_a + m.var_b);
    if (mean_sq == 0.0) return structure;
    return structure * 2.0 * m.mu_a * m.mu_b / mean_sq;
  });
}

double scc(const Image& a, const Image& b, const MetricsConfig& config) {
  check_pair(a, b, "scc");
  check_window(a, config.scc_window, "scc");
  const std::size_t n = config.scc_window;
  const std::vector<double> weights(n * n, 1.0 / static_cast<double>(n * n));
  double total = 0.0;
  for (std::size_t c = 0; c < a.dim(2); ++c) {
    const Plane ha = laplacian(channel(a, c)), hb = laplacian(channel(b, c));
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + n <= ha.h; ++y) {
      for (std::size_t x = 0; x + n <= ha.w; ++x, ++count) {
        const bool fa = patch_flat(ha, y, x, n), fb = patch_flat(hb, y, x, n);
        if (fa && fb) {
          sum += ha(y, x) == hb(y, x) ? 1.0 : 0.0;
        } else if (!fa && !fb) {
          const Moments m = window_moments(ha, hb, y, x, n, weights);
          sum += m.cov / (std::sqrt(m.var_a) * std::sqrt(m.var_b));
        }
      }
    }
    total += sum / static_cast<double>(count);
  }
  return total / static_cast<double>(a.dim(2));
}

double vifp(const Image& reference, const Image& distorted, const MetricsConfig& config) {
  check_pair(reference, distorted, "vifp");
  if (config.vifp_scales == 0) throw ConfigError("vifp: need at least one scale");
  if (!(config.vifp_noise_variance > 0.0)) throw ConfigError("vifp: noise variance must be positive");
  constexpr double eps = 1e-10;
  const double sn = config.vifp_noise_variance;
  const std::size_t first = (std::size_t{1} << config.vifp_scales) + 1;
  check_window(reference, first, "vifp");

  double score = 0.0;
  for (std::size_t ch = 0; ch < reference.dim(2); ++ch) {
    Plane r = channel(reference, ch), d = channel(distorted, ch);
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < config.vifp_scales; ++s) {
      const std::size_t n = (std::size_t{1} << (config.vifp_scales - s)) + 1;
      const auto win = gaussian_window(n, static_cast<double>(n) / 5.0);
      if (s > 0) {
        if (r.h < n || r.w < n) break;
        r = downsample2(filter_valid(r, win, n));
        d = downsample2(filter_valid(d, win, n));
      }
      if (r.h < n || r.w < n) break;
      for (std::size_t y = 0; y + n <= r.h; ++y) {
        for (std::size_t x = 0; x + n <= r.w; ++x) {
          const Moments m = window_moments(r, d, y, x, n, win);
          double var_r = std::max(m.var_a, 0.0), var_d = std::max(m.var_b, 0.0);
          double g = m.cov / (var_r + eps);
          double sv = var_d - g * m.cov;
          if (var_r < eps) {
            g = 0.0;
            sv = var_d;
            var_r = 0.0;
          }
          if (var_d < eps) {
            g = 0.0;
            sv = 0.0;
          }
          if (g < 0.0) {
            sv = var_d;
            g = 0.0;
          }
          sv = std::max(sv, eps);
          num += std::log10(1.0 + g * g * var_r / (sv + sn));
          den += std::log10(1.0 + var_r / sn);
        }
      }
    }
    if (den == 0.0) {
      score += channel(reference, ch).v == channel(distorted, ch).v ? 1.0 : 0.0;
    } else {
      score += num / den;
    }
  }
  return score / static_cast<double>(reference.dim(2));
}

LpDistances lp_distances(const Image& a, const Image& b) {
  require_same_shape(a, b, "lp_distances");
  LpDistances d;
  d.l1 = simd::abs_distance(a.data().data(), b.data().data(), a.size());
  d.l2 = std::sqrt(simd::squared_distance(a.data().data(), b.data().data(), a.size()));
  d.linf = simd::max_abs_distance(a.data().data(), b.data().data(), a.size());
  return d;
}

nlohmann::json QualityReport::to_json() const {
  return {{"psnr", psnr}, {"ssim", ssim},         {"uqi", uqi},
          {"scc", scc},   {"vifp", vifp},         {"l1", l1},
          {"l2", l2},     {"linf", linf},         {"l1_per_pixel", l1_per_pixel},
          {"l2_per_pixel", l2_per_pixel}};
}

QualityReport quality_report(const Image& original, const Image& adversarial, const MetricsConfig& config) {
  QualityReport q;
  q.psnr = psnr(original, adversarial, config);
  q.ssim = ssim(original, adversarial, config);
  q.uqi = uqi(original, adversarial, config);
  q.scc = scc(original, adversarial, config);
  q.vifp = vifp(original, adversarial, config);
  const LpDistances d = lp_distances(original, adversarial);
  q.l1 = d.l1;
  q.l2 = d.l2;
  q.linf = d.linf;
  const auto n = static_cast<double>(original.size());
  q.l1_per_pixel = d.l1 / n;
  q.l2_per_pixel = d.l2 / n;
  return q;
}

}  // namespace jnd
