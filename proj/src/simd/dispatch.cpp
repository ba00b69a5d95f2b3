#include <atomic>
#include <cstdlib>
#include <string>

#include "jnd/error.hpp"
#include "jnd/simd/kernels.hpp"

namespace jnd::simd {
namespace {

constexpr KernelTable kScalar{Backend::scalar,           scalar::dot,          scalar::axpy,
                              scalar::squared_distance, scalar::abs_distance, scalar::max_abs_distance};

#if JND_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2{Backend::avx2,           avx2::dot,          avx2::axpy,
                            avx2::squared_distance, avx2::abs_distance, avx2::max_abs_distance};
#endif

const KernelTable* detect() noexcept {
  if (const char* env = std::getenv("JND_SIMD"); env && std::string(env) == "scalar") {
    return &kScalar;
  }
#if JND_HAVE_AVX2_KERNELS
  if (supported(Backend::avx2)) return &kAvx2;
#endif
  return &kScalar;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> ptr{detect()};
  return ptr;
}

}  // namespace

bool supported(Backend backend) noexcept {
  switch (backend) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if JND_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Backend backend) {
  if (!supported(backend)) {
    throw ConfigError("SIMD backend '" + std::string(backend_name(backend)) + "' is not supported on this CPU");
  }
#if JND_HAVE_AVX2_KERNELS
  if (backend == Backend::avx2) return kAvx2;
#endif
  return kScalar;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

void select(Backend backend) { current().store(&table(backend), std::memory_order_relaxed); }

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

}  // namespace jnd::simd
