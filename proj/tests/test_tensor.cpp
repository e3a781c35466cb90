#include <doctest.h>

#include <cmath>
#include <random>

#include "pnpcsi/tensor.hpp"

using namespace pnpcsi;

namespace {

template <typename T>
Tensor4T<T> random_tensor(int n, int c, int h, int w, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor4T<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
ConvParams<T> random_conv(int cout, int cin, int k, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ConvParams<T> p;
  p.cout = cout;
  p.cin = cin;
  p.k = k;
  p.weight.resize(static_cast<std::size_t>(cout) * cin * k * k);
  p.bias.resize(cout);
  for (auto& v : p.weight) v = static_cast<T>(u(rng));
  for (auto& v : p.bias) v = static_cast<T>(u(rng));
  return p;
}

// Direct zero-padded cross-correlation.
template <typename T>
Tensor4T<T> naive_conv(const Tensor4T<T>& x, const ConvParams<T>& p) {
  Tensor4T<T> y(x.n, p.cout, x.h, x.w);
  const int pad = p.k / 2;
  for (int b = 0; b < x.n; ++b)
    for (int co = 0; co < p.cout; ++co)
      for (int i = 0; i < x.h; ++i)
        for (int j = 0; j < x.w; ++j) {
          double acc = p.bias[co];
          for (int ci = 0; ci < p.cin; ++ci)
            for (int ky = 0; ky < p.k; ++ky)
              for (int kx = 0; kx < p.k; ++kx) {
                const int yy = i + ky - pad, xx = j + kx - pad;
                if (yy < 0 || yy >= x.h || xx < 0 || xx >= x.w) continue;
                acc += double(p.weight[((co * p.cin + ci) * p.k + ky) * p.k + kx]) *
                       double(x.at(b, ci, yy, xx));
              }
          y.at(b, co, i, j) = static_cast<T>(acc);
        }
  return y;
}

ConvParams<float> single_kernel(std::vector<float> w) {
  ConvParams<float> p;
  p.cout = 1;
  p.cin = 1;
  p.k = 3;
  p.weight = std::move(w);
  p.bias = {0.0f};
  return p;
}

}  // namespace

TEST_CASE("pixel_unshuffle shape and layout") {
  Tensor4 x(1, 2, 4, 4);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = float(i);
  const auto y = pixel_unshuffle(x, 2);
  CHECK(y.n == 1);
  CHECK(y.c == 8);
  CHECK(y.h == 2);
  CHECK(y.w == 2);
  // Channel c*4 + i*2 + j holds x[c, 2y+i, 2x+j].
  CHECK(y.at(0, 1 * 4 + 1 * 2 + 0, 1, 0) == x.at(0, 1, 3, 0));
  CHECK(y.at(0, 0 * 4 + 0 * 2 + 1, 0, 1) == x.at(0, 0, 0, 3));
}

TEST_CASE("pixel shuffle round trips bit-exactly") {
  std::mt19937 rng(1);
  for (int r : {1, 2, 4}) {
    const auto x = random_tensor<float>(2, 3, 8, 16, rng);
    const auto back = pixel_shuffle(pixel_unshuffle(x, r), r);
    CHECK(back.same_shape(x));
    CHECK(back.data == x.data);
  }
  const auto x = random_tensor<float>(1, 1, 4, 4, rng);
  CHECK(pixel_unshuffle(x, 1).data == x.data);
}

TEST_CASE("pixel_unshuffle of a checkerboard gives constant channels") {
  Tensor4 x(1, 1, 8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) x.at(0, 0, i, j) = float((i + j) % 2);
  const auto y = pixel_unshuffle(x, 2);
  for (int c = 0; c < 4; ++c) {
    const float v = y.at(0, c, 0, 0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(y.at(0, c, i, j) == v);
  }
}

TEST_CASE("pixel (un)shuffle rejects incompatible shapes") {
  CHECK_THROWS_AS(pixel_unshuffle(Tensor4(1, 1, 5, 4), 2), DimensionError);
  CHECK_THROWS_AS(pixel_shuffle(Tensor4(1, 3, 2, 2), 2), DimensionError);
  CHECK_THROWS_AS(pixel_unshuffle(Tensor4(1, 1, 4, 4), 0), DimensionError);
}

TEST_CASE("conv2d identity kernel") {
  std::mt19937 rng(2);
  const auto x = random_tensor<float>(1, 1, 6, 7, rng);
  const auto y = conv2d(x, single_kernel({0, 0, 0, 0, 1, 0, 0, 0, 0}));
  CHECK(y.data == x.data);
}

TEST_CASE("conv2d box kernel sees the zero padding") {
  Tensor4 x(1, 1, 5, 5);
  std::fill(x.data.begin(), x.data.end(), 1.0f);
  const auto y = conv2d(x, single_kernel(std::vector<float>(9, 1.0f)));
  CHECK(y.at(0, 0, 2, 2) == 9.0f);
  CHECK(y.at(0, 0, 1, 3) == 9.0f);
  CHECK(y.at(0, 0, 0, 0) == 4.0f);
  CHECK(y.at(0, 0, 4, 4) == 4.0f);
  CHECK(y.at(0, 0, 0, 2) == 6.0f);
}

TEST_CASE("conv2d matches a direct loop") {
  std::mt19937 rng(3);
  for (int k : {1, 3, 5}) {
    const auto x = random_tensor<float>(2, 5, 9, 11, rng);
    const auto p = random_conv<float>(7, 5, k, rng);
    const auto y = conv2d(x, p);
    const auto ref = naive_conv(x, p);
    for (std::size_t i = 0; i < y.size(); ++i)
      CHECK(std::abs(y.data[i] - ref.data[i]) <= 1e-6 * (1 + std::abs(ref.data[i])) * 10);
  }
  const auto xd = random_tensor<double>(1, 4, 6, 6, rng);
  const auto pd = random_conv<double>(3, 4, 3, rng);
  const auto yd = conv2d(xd, pd);
  const auto rd = naive_conv(xd, pd);
  for (std::size_t i = 0; i < yd.size(); ++i)
    CHECK(std::abs(yd.data[i] - rd.data[i]) <= 1e-12);
}

TEST_CASE("conv2d is linear in its input") {
  std::mt19937 rng(4);
  auto p = random_conv<double>(3, 2, 3, rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  const auto a = random_tensor<double>(1, 2, 5, 6, rng);
  const auto b = random_tensor<double>(1, 2, 5, 6, rng);
  Tensor4T<double> mix(1, 2, 5, 6);
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
  const auto ya = conv2d(a, p), yb = conv2d(b, p), ym = conv2d(mix, p);
  for (std::size_t i = 0; i < ym.size(); ++i)
    CHECK(std::abs(ym.data[i] - (2.0 * ya.data[i] - 0.5 * yb.data[i])) < 1e-12);
}

TEST_CASE("conv2d rejects mismatched parameters") {
  std::mt19937 rng(5);
  const auto x = random_tensor<float>(1, 2, 4, 4, rng);
  CHECK_THROWS_AS(conv2d(x, random_conv<float>(1, 3, 3, rng)), DimensionError);
  CHECK_THROWS_AS(conv2d(x, random_conv<float>(1, 2, 2, rng)), DimensionError);
  auto p = random_conv<float>(1, 2, 3, rng);
  p.bias.clear();
  CHECK_THROWS_AS(conv2d(x, p), DimensionError);
}

TEST_CASE("im2col and col2im_add are adjoint") {
  std::mt19937 rng(6);
  const int cin = 3, h = 5, w = 4, k = 3;
  const auto x = random_tensor<double>(1, cin, h, w, rng);
  const auto c = random_tensor<double>(1, cin * k * k, h, w, rng);
  std::vector<double> col(c.size());
  im2col(x.data.data(), cin, h, w, k, col.data());
  std::vector<double> back(x.size(), 0.0);
  col2im_add(c.data.data(), cin, h, w, k, back.data());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < col.size(); ++i) lhs += col[i] * c.data[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * back[i];
  CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("conv backward matches central differences") {
  std::mt19937 rng(7);
  const int cin = 3, cout = 2, h = 4, w = 5;
  auto p = random_conv<double>(cout, cin, 3, rng);
  const auto x = random_tensor<double>(1, cin, h, w, rng);
  const auto g = random_tensor<double>(1, cout, h, w, rng);  // d loss / d out

  auto loss = [&](const ConvParams<double>& q, const Tensor4T<double>& in) {
    const auto y = conv2d(in, q);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * g.data[i];
    return s;
  };

  std::vector<double> dw(p.weight.size(), 0.0), db(p.bias.size(), 0.0),
      dx(x.size());
  std::vector<double> sa, sb;
  conv_backward_image<double>(x.data.data(), g.data.data(), h, w, p, dw, db,
                              dx.data(), sa, sb);

  const double eps = 1e-3;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::abs(b));
  };
  for (std::size_t i = 0; i < p.weight.size(); ++i) {
    auto qp = p, qm = p;
    qp.weight[i] += eps;
    qm.weight[i] -= eps;
    CHECK(rel(dw[i], (loss(qp, x) - loss(qm, x)) / (2 * eps)) <= 1e-4);
  }
  for (std::size_t i = 0; i < p.bias.size(); ++i) {
    auto qp = p, qm = p;
    qp.bias[i] += eps;
    qm.bias[i] -= eps;
    CHECK(rel(db[i], (loss(qp, x) - loss(qm, x)) / (2 * eps)) <= 1e-4);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xp = x, xm = x;
    xp.data[i] += eps;
    xm.data[i] -= eps;
    CHECK(rel(dx[i], (loss(p, xp) - loss(p, xm)) / (2 * eps)) <= 1e-4);
  }
}

TEST_CASE("generic gemm handles accumulate") {
  const double a[] = {1, 2, 3, 4};   // 2x2
  const double b[] = {5, 6, 7, 8};   // 2x2
  double c[] = {1, 1, 1, 1};
  gemm_nn<double>(2, 2, 2, a, 2, b, 2, c, 2, true);
  CHECK(c[0] == 20);
  CHECK(c[1] == 23);
  CHECK(c[2] == 44);
  CHECK(c[3] == 51);
  gemm_nn<double>(2, 2, 2, a, 2, b, 2, c, 2, false);
  CHECK(c[0] == 19);
}
