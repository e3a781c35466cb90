#pragma once

// Dense float kernels used by the convolutional denoiser.
//
// Every kernel has a portable scalar reference in `pnpcsi::simd::scalar` and,
// on x86-64, an AVX2/FMA variant in `pnpcsi::simd::avx2`. The unqualified
// entry points dispatch at runtime to the best variant the CPU supports.
// Setting the environment variable PNPCSI_SIMD=scalar forces the reference
// path, which is what the equivalence tests compare against.

#include <cstddef>
#include <string_view>

namespace pnpcsi::simd {

enum class Isa { kScalar, kAvx2 };

// Highest instruction set both compiled in and supported by this CPU.
Isa detected_isa();

// Currently selected instruction set (detected, unless overridden).
Isa active_isa();
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa);

// Row-major GEMM:  C[m x n] = beta * C + A[m x k] * B[k x n], beta in {0, 1}.
// lda/ldb/ldc are row strides in elements.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool accumulate);

float dot(const float* x, const float* y, std::size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);

// x[i] = max(x[i], 0)
void relu_inplace(float* x, std::size_t n);

namespace scalar {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool accumulate);
float dot(const float* x, const float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void relu_inplace(float* x, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define PNPCSI_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool accumulate);
float dot(const float* x, const float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void relu_inplace(float* x, std::size_t n);
}  // namespace avx2
#else
#define PNPCSI_HAVE_AVX2_KERNELS 0
#endif

}  // namespace pnpcsi::simd
