#include <atomic>
#include <cstdlib>
#include <cstring>

#include "pnpcsi/simd/kernels.hpp"

namespace pnpcsi::simd {
namespace {

Isa probe() {
#if PNPCSI_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

Isa initial() {
  const char* env = std::getenv("PNPCSI_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::kScalar;
  return probe();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial()};
  return isa;
}

}  // namespace

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) isa = Isa::kScalar;
  current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

#if PNPCSI_HAVE_AVX2_KERNELS
#define PNPCSI_DISPATCH(fn, ...)                               \
  (active_isa() == Isa::kAvx2 ? avx2::fn(__VA_ARGS__) \
                              : scalar::fn(__VA_ARGS__))
#else
#define PNPCSI_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool accumulate) {
  PNPCSI_DISPATCH(gemm_nn, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

float dot(const float* x, const float* y, std::size_t n) {
  return PNPCSI_DISPATCH(dot, x, y, n);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  PNPCSI_DISPATCH(axpy, alpha, x, y, n);
}

void relu_inplace(float* x, std::size_t n) {
  PNPCSI_DISPATCH(relu_inplace, x, n);
}

#undef PNPCSI_DISPATCH

}  // namespace pnpcsi::simd
