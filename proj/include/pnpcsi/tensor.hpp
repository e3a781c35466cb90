#pragma once

// Dense NCHW tensors and the layer primitives of the denoiser: pixel
// (un)shuffle and same-padded 2-D convolution with their adjoints.

#include <cstddef>
#include <span>
#include <vector>

#include "pnpcsi/common.hpp"

namespace pnpcsi {

template <typename T>
struct Tensor4T {
  int n = 0;  // batch
  int c = 0;  // channels
  int h = 0;  // height
  int w = 0;  // width
  std::vector<T> data;

  Tensor4T() = default;
  Tensor4T(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw DimensionError("negative tensor dimension");
  }

  std::size_t size() const { return data.size(); }
  std::size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x;
  }
  T& at(int b, int ch, int y, int x) { return data[index(b, ch, y, x)]; }
  const T& at(int b, int ch, int y, int x) const {
    return data[index(b, ch, y, x)];
  }
  // Pointer to image b, channel 0.
  T* image(int b) { return data.data() + static_cast<std::size_t>(b) * c * h * w; }
  const T* image(int b) const {
    return data.data() + static_cast<std::size_t>(b) * c * h * w;
  }
  bool same_shape(const Tensor4T& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

using Tensor4 = Tensor4T<float>;

// (b, c, h, w) -> (b, c*r*r, h/r, w/r); output channel c*r*r + i*r + j holds
// the pixels at offset (i, j) inside each r x r block.
template <typename T>
Tensor4T<T> pixel_unshuffle(const Tensor4T<T>& x, int r);

// Exact inverse of pixel_unshuffle.
template <typename T>
Tensor4T<T> pixel_shuffle(const Tensor4T<T>& x, int r);

// Convolution kernel bank: cout x cin x k x k (row-major), plus bias[cout].
template <typename T>
struct ConvParams {
  int cout = 0;
  int cin = 0;
  int k = 3;
  std::vector<T> weight;
  std::vector<T> bias;

  std::size_t fan_in() const { return static_cast<std::size_t>(cin) * k * k; }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

// Cross-correlation with zero "same" padding (odd k), stride 1.
template <typename T>
Tensor4T<T> conv2d(const Tensor4T<T>& x, const ConvParams<T>& p);

// Single-image building blocks shared by inference and training. `col` is
// (cin*k*k) x (h*w); `in`/`out` are channel-major planes.
template <typename T>
void im2col(const T* in, int cin, int h, int w, int k, T* col);
template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int k, T* in);

// out[cout x hw] = W * im2col(in) + b. col_scratch is left holding
// im2col(in) for reuse by conv_backward_col.
template <typename T>
void conv_forward_image(const T* in, int h, int w, const ConvParams<T>& p,
                        T* out, std::vector<T>& col_scratch);

// Given d(out), accumulates dW/db and (optionally) writes d(in).
template <typename T>
void conv_backward_image(const T* in, const T* dout, int h, int w,
                         const ConvParams<T>& p, std::span<T> dweight,
                         std::span<T> dbias, T* din,
                         std::vector<T>& scratch_a, std::vector<T>& scratch_b);

// Same as conv_backward_image with col = im2col(in) already computed.
template <typename T>
void conv_backward_col(const T* col, const T* dout, int h, int w,
                       const ConvParams<T>& p, std::span<T> dweight,
                       std::span<T> dbias, T* din, std::vector<T>& scratch_a,
                       std::vector<T>& scratch_b);

// Row-major C = (accumulate ? C : 0) + A * B. float dispatches to the SIMD
// kernels; other types use a plain loop.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             std::size_t lda, const T* b, std::size_t ldb, T* c,
             std::size_t ldc, bool accumulate);

}  // namespace pnpcsi
