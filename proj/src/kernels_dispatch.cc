#include <atomic>
#include <cstdlib>
#include <string_view>

#include "scalemm/kernels.h"

namespace scalemm::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(SCALEMM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() {
  if (const char* env = std::getenv("SCALEMM_SIMD")) {
    if (std::string_view(env) == "scalar") return Backend::kScalar;
  }
  return cpu_has_avx2() ? Backend::kAvx2 : Backend::kScalar;
}

// -1 means "no override".
std::atomic<int> g_forced{-1};

}  // namespace

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend backend) {
  if (backend == Backend::kScalar) return true;
  static const bool avx2 = cpu_has_avx2();
  return avx2;
}

Backend active_backend() {
  const int forced = g_forced.load(std::memory_order_relaxed);
  if (forced >= 0) return static_cast<Backend>(forced);
  static const Backend detected = detect();
  return detected;
}

void force_backend(std::optional<Backend> backend) {
  if (backend && !backend_available(*backend)) return;
  g_forced.store(backend ? static_cast<int>(*backend) : -1, std::memory_order_relaxed);
}

const KernelTable& table(Backend backend) {
#if defined(SCALEMM_HAVE_AVX2)
  if (backend == Backend::kAvx2 && backend_available(Backend::kAvx2)) return avx2::kernels();
#endif
  (void)backend;
  return scalar::kernels();
}

}  // namespace scalemm::kernels
