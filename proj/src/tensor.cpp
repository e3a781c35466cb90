#include "pnpcsi/tensor.hpp"

#include <algorithm>
#include <string>

#include "pnpcsi/simd/kernels.hpp"

namespace pnpcsi {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool accumulate) {
  if constexpr (std::is_same_v<T, float>) {
    simd::gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * ldc;
      if (!accumulate) std::fill(crow, crow + n, T(0));
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * lda + p];
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
Tensor4T<T> pixel_unshuffle(const Tensor4T<T>& x, int r) {
  if (r < 1) throw DimensionError("pixel_unshuffle: factor must be >= 1");
  if (x.h % r != 0 || x.w % r != 0)
    throw DimensionError("pixel_unshuffle: spatial dims " + std::to_string(x.h) +
                         "x" + std::to_string(x.w) + " not divisible by " +
                         std::to_string(r));
  Tensor4T<T> y(x.n, x.c * r * r, x.h / r, x.w / r);
  for (int b = 0; b < x.n; ++b)
    for (int ch = 0; ch < x.c; ++ch)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const int oc = ch * r * r + i * r + j;
          for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx)
              y.at(b, oc, yy, xx) = x.at(b, ch, yy * r + i, xx * r + j);
        }
  return y;
}

template <typename T>
Tensor4T<T> pixel_shuffle(const Tensor4T<T>& x, int r) {
  if (r < 1) throw DimensionError("pixel_shuffle: factor must be >= 1");
  if (x.c % (r * r) != 0)
    throw DimensionError("pixel_shuffle: channel count " + std::to_string(x.c) +
                         " not divisible by " + std::to_string(r * r));
  Tensor4T<T> y(x.n, x.c / (r * r), x.h * r, x.w * r);
  for (int b = 0; b < y.n; ++b)
    for (int ch = 0; ch < y.c; ++ch)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const int ic = ch * r * r + i * r + j;
          for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx)
              y.at(b, ch, yy * r + i, xx * r + j) = x.at(b, ic, yy, xx);
        }
  return y;
}

namespace {

// Output columns x in [lo, hi) read source column x + dx inside [0, w).
inline void valid_range(int w, int dx, int& lo, int& hi) {
  lo = std::max(0, -dx);
  hi = std::min(w, w - dx);
  if (hi < lo) hi = lo;
}

}  // namespace

template <typename T>
void im2col(const T* in, int cin, int h, int w, int k, T* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < cin; ++ch) {
    const T* plane = in + ch * hw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        int lo, hi;
        valid_range(w, dx, lo, hi);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          T* drow = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(sy) * w;
          std::fill(drow, drow + lo, T(0));
          std::copy(srow + lo + dx, srow + hi + dx, drow + lo);
          std::fill(drow + hi, drow + w, T(0));
        }
      }
  }
}

template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int k, T* in) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < cin; ++ch) {
    T* plane = in + ch * hw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src =
            col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        int lo, hi;
        valid_range(w, dx, lo, hi);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const T* srow = src + static_cast<std::size_t>(y) * w;
          T* drow = plane + static_cast<std::size_t>(sy) * w + dx;
          for (int x = lo; x < hi; ++x) drow[x] += srow[x];
        }
      }
  }
}

template <typename T>
void conv_forward_image(const T* in, int h, int w, const ConvParams<T>& p,
                        T* out, std::vector<T>& col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t kdim = p.fan_in();
  col.resize(kdim * hw);
  im2col(in, p.cin, h, w, p.k, col.data());
  for (int co = 0; co < p.cout; ++co)
    std::fill(out + co * hw, out + (co + 1) * hw, p.bias[co]);
  gemm_nn<T>(p.cout, hw, kdim, p.weight.data(), kdim, col.data(), hw, out, hw,
             true);
}

template <typename T>
void conv_backward_image(const T* in, const T* dout, int h, int w,
                         const ConvParams<T>& p, std::span<T> dweight,
                         std::span<T> dbias, T* din, std::vector<T>& sa,
                         std::vector<T>& sb) {
  std::vector<T> col(p.fan_in() * static_cast<std::size_t>(h) * w);
  im2col(in, p.cin, h, w, p.k, col.data());
  conv_backward_col(col.data(), dout, h, w, p, dweight, dbias, din, sa, sb);
}

template <typename T>
void conv_backward_col(const T* col, const T* dout, int h, int w,
                       const ConvParams<T>& p, std::span<T> dweight,
                       std::span<T> dbias, T* din, std::vector<T>& sa,
                       std::vector<T>& sb) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t kdim = p.fan_in();
  const std::size_t cout = static_cast<std::size_t>(p.cout);
  for (std::size_t co = 0; co < cout; ++co) {
    T acc = 0;
    const T* d = dout + co * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += d[i];
    dbias[co] += acc;
  }

  // dW^T = col * dout^T; transposing dout is cheaper than transposing col.
  sa.resize(std::max(kdim * hw, kdim * cout));
  sb.resize(std::max(hw, kdim) * cout);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t i = 0; i < hw; ++i) sb[i * cout + co] = dout[co * hw + i];
  gemm_nn<T>(kdim, cout, hw, col, hw, sb.data(), cout, sa.data(), cout, false);
  for (std::size_t r = 0; r < kdim; ++r)
    for (std::size_t co = 0; co < cout; ++co)
      dweight[co * kdim + r] += sa[r * cout + co];

  if (din == nullptr) return;
  // d(col) = W^T * dout, then scatter back onto the input planes.
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t r = 0; r < kdim; ++r)
      sb[r * cout + co] = p.weight[co * kdim + r];
  gemm_nn<T>(kdim, hw, cout, sb.data(), cout, dout, hw, sa.data(), hw, false);
  std::fill(din, din + static_cast<std::size_t>(p.cin) * hw, T(0));
  col2im_add(sa.data(), p.cin, h, w, p.k, din);
}

template <typename T>
Tensor4T<T> conv2d(const Tensor4T<T>& x, const ConvParams<T>& p) {
  if (x.c != p.cin)
    throw DimensionError("conv2d: input has " + std::to_string(x.c) +
                         " channels, kernel expects " + std::to_string(p.cin));
  if (p.k % 2 == 0) throw DimensionError("conv2d: kernel size must be odd");
  if (p.weight.size() != static_cast<std::size_t>(p.cout) * p.fan_in() ||
      p.bias.size() != static_cast<std::size_t>(p.cout))
    throw DimensionError("conv2d: parameter buffer sizes do not match shape");
  Tensor4T<T> y(x.n, p.cout, x.h, x.w);
  std::vector<T> col;
  for (int b = 0; b < x.n; ++b)
    conv_forward_image(x.image(b), x.h, x.w, p, y.image(b), col);
  return y;
}

#define PNPCSI_INSTANTIATE(T)                                                  \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*,   \
                           std::size_t, const T*, std::size_t, T*,             \
                           std::size_t, bool);                                 \
  template Tensor4T<T> pixel_unshuffle<T>(const Tensor4T<T>&, int);            \
  template Tensor4T<T> pixel_shuffle<T>(const Tensor4T<T>&, int);              \
  template void im2col<T>(const T*, int, int, int, int, T*);                   \
  template void col2im_add<T>(const T*, int, int, int, int, T*);               \
  template void conv_forward_image<T>(const T*, int, int,                      \
                                      const ConvParams<T>&, T*,                \
                                      std::vector<T>&);                        \
  template void conv_backward_image<T>(                                        \
      const T*, const T*, int, int, const ConvParams<T>&, std::span<T>,        \
      std::span<T>, T*, std::vector<T>&, std::vector<T>&);                     \
  template void conv_backward_col<T>(                                          \
      const T*, const T*, int, int, const ConvParams<T>&, std::span<T>,        \
      std::span<T>, T*, std::vector<T>&, std::vector<T>&);                     \
  template Tensor4T<T> conv2d<T>(const Tensor4T<T>&, const ConvParams<T>&);

PNPCSI_INSTANTIATE(float)
PNPCSI_INSTANTIATE(double)

#undef PNPCSI_INSTANTIATE

}  // namespace pnpcsi
