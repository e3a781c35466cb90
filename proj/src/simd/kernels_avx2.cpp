// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "pnpcsi/simd/kernels.hpp"

#if PNPCSI_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace pnpcsi::simd::avx2 {
namespace {

// Both operands are packed: `ap` holds R floats per k step (one per row),
// `bp` holds W floats per k step. C is R x W, updated in place.
template <int R>
inline void tile16(std::size_t k, const float* ap, const float* bp, float* c,
                   std::size_t ldc, bool accumulate) {
  __m256 acc0[R];
  __m256 acc1[R];
  for (int r = 0; r < R; ++r) {
    if (accumulate) {
      acc0[r] = _mm256_loadu_ps(c + r * ldc);
      acc1[r] = _mm256_loadu_ps(c + r * ldc + 8);
    } else {
      acc0[r] = _mm256_setzero_ps();
      acc1[r] = _mm256_setzero_ps();
    }
  }
  for (std::size_t p = 0; p < k; ++p, ap += R, bp += 16) {
    const __m256 b0 = _mm256_load_ps(bp);
    const __m256 b1 = _mm256_load_ps(bp + 8);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(ap + r);
      acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm256_storeu_ps(c + r * ldc, acc0[r]);
    _mm256_storeu_ps(c + r * ldc + 8, acc1[r]);
  }
}

template <int R>
inline void tile8(std::size_t k, const float* ap, const float* bp, float* c,
                  std::size_t ldc, bool accumulate) {
  __m256 acc[R];
  for (int r = 0; r < R; ++r)
    acc[r] = accumulate ? _mm256_loadu_ps(c + r * ldc) : _mm256_setzero_ps();
  for (std::size_t p = 0; p < k; ++p, ap += R, bp += 8) {
    const __m256 bv = _mm256_load_ps(bp);
    for (int r = 0; r < R; ++r)
      acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(ap + r), bv, acc[r]);
  }
  for (int r = 0; r < R; ++r) _mm256_storeu_ps(c + r * ldc, acc[r]);
}

using TileFn = void (*)(std::size_t, const float*, const float*, float*,
                        std::size_t, bool);

constexpr int kRows = 6;
constexpr std::size_t kDepth = 256;  // k block; a 16-wide B panel is 16 KiB
constexpr TileFn kTile16[kRows + 1] = {nullptr,    tile16<1>, tile16<2>,
                                       tile16<3>,  tile16<4>, tile16<5>,
                                       tile16<6>};
constexpr TileFn kTile8[kRows + 1] = {nullptr,  tile8<1>, tile8<2>, tile8<3>,
                                      tile8<4>, tile8<5>, tile8<6>};

struct alignas(32) Block {
  float v[8];
};

// 32-byte aligned scratch reused across calls on the same thread.
float* scratch(std::vector<Block>& buf, std::size_t floats) {
  const std::size_t blocks = (floats + 7) / 8;
  if (buf.size() < blocks) buf.resize(blocks);
  return buf.front().v;
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float* c,
             std::size_t ldc, bool accumulate) {
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0f);
    return;
  }
  thread_local std::vector<Block> abuf, bbuf;
  const std::size_t n_vec = n / 8 * 8;
  for (std::size_t p0 = 0; p0 < k; p0 += kDepth) {
    const std::size_t kc = std::min(kDepth, k - p0);
    const bool acc = accumulate || p0 > 0;

    // A packed per 6-row block: for each k step, the block's rows in order.
    float* ap = scratch(abuf, ((m + kRows - 1) / kRows) * kRows * kc);
    for (std::size_t i = 0; i < m; i += kRows) {
      const std::size_t rows = std::min<std::size_t>(kRows, m - i);
      float* dst = ap + i * kc;
      for (std::size_t p = 0; p < kc; ++p)
        for (std::size_t r = 0; r < rows; ++r)
          *dst++ = a[(i + r) * lda + p0 + p];
    }

    float* bp = scratch(bbuf, 16 * kc);
    std::size_t j = 0;
    for (; j < n_vec; ) {
      const std::size_t w = j + 16 <= n_vec ? 16 : 8;
      for (std::size_t p = 0; p < kc; ++p)
        std::copy_n(b + (p0 + p) * ldb + j, w, bp + p * w);
      for (std::size_t i = 0; i < m; i += kRows) {
        const std::size_t rows = std::min<std::size_t>(kRows, m - i);
        const TileFn fn = w == 16 ? kTile16[rows] : kTile8[rows];
        fn(kc, ap + i * kc, bp, c + i * ldc + j, ldc, acc);
      }
      j += w;
    }
    for (std::size_t i = 0; i < m && j < n; ++i) {
      float* crow = c + i * ldc;
      if (!acc) std::fill(crow + j, crow + n, 0.0f);
      for (std::size_t p = 0; p < kc; ++p) {
        const float av = a[i * lda + p0 + p];
        const float* brow = b + (p0 + p) * ldb;
        for (std::size_t jj = j; jj < n; ++jj) crow[jj] += av * brow[jj];
      }
    }
  }
}

float dot(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8),
                           _mm256_loadu_ps(y + i + 8), acc1);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_inplace(float* x, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) x[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace pnpcsi::simd::avx2

#endif
