#pragma once

// Flat-array arithmetic used by every hot loop in the toolkit (convolution,
// dense layers, distances). Each kernel has a portable scalar reference and,
// on x86-64, an AVX2+FMA variant. The variant is picked once at runtime from
// CPUID; JND_SIMD=scalar in the environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace jnd::simd {

enum class Backend { scalar, avx2 };

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // sum_i |a[i] - b[i]|
  double (*abs_distance)(const double* a, const double* b, std::size_t n);
  // max_i |a[i] - b[i]|, 0 for n == 0
  double (*max_abs_distance)(const double* a, const double* b, std::size_t n);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
double abs_distance(const double* a, const double* b, std::size_t n);
double max_abs_distance(const double* a, const double* b, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define JND_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
double abs_distance(const double* a, const double* b, std::size_t n);
double max_abs_distance(const double* a, const double* b, std::size_t n);
}  // namespace avx2
#else
#define JND_HAVE_AVX2_KERNELS 0
#endif

// True when the running CPU can execute the given backend.
bool supported(Backend backend) noexcept;

const KernelTable& table(Backend backend);

// The table in use. Selected on first call.
const KernelTable& active() noexcept;

// Overrides the runtime choice (tests, benchmarking). Throws ConfigError
// when the CPU lacks the backend.
void select(Backend backend);

std::string_view backend_name(Backend backend) noexcept;

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double squared_distance(const double* a, const double* b, std::size_t n) {
  return active().squared_distance(a, b, n);
}
inline double abs_distance(const double* a, const double* b, std::size_t n) {
  return active().abs_distance(a, b, n);
}
inline double max_abs_distance(const double* a, const double* b, std::size_t n) {
  return active().max_abs_distance(a, b, n);
}

}  // namespace jnd::simd
