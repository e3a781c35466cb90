#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pnpcsi/channel_model.hpp"
#include "test_util.hpp"

using namespace pnpcsi;
using pnpcsi::testing::random_cmatrix;

namespace {

constexpr double kPi = std::numbers::pi;

ArrayGeometry small_geometry(int n_t, int n_s) {
  return ArrayGeometry::uniform(n_t, n_s, 28e9, 200e6 / 1024);
}

// Literal evaluation of the multipath sum. The phase reaches ~1e4 rad, so
// it is accumulated in extended precision to keep the oracle itself exact.
CMatrix naive_channel(const std::vector<PathParams>& paths,
                      const ArrayGeometry& g) {
  const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
  CMatrix h = CMatrix::Zero(g.n_subcarriers(), g.n_antennas);
  for (int n = 0; n < g.n_subcarriers(); ++n)
    for (int k = 0; k < g.n_antennas; ++k)
      for (const auto& p : paths) {
        const long double f = g.subcarrier_hz[n];
        const long double ph =
            -two_pi * f * p.tau + p.phi -
            two_pi * g.spacing_d * f * k * std::sin(p.theta) / g.light_speed_c;
        h(n, k) += cplx(static_cast<double>(p.alpha * std::cos(ph)),
                        static_cast<double>(p.alpha * std::sin(ph)));
      }
  return h;
}

// Unitary DFT by direct summation with the documented signs.
CMatrix naive_sf2ad(const CMatrix& h, int crop) {
  const int ns = static_cast<int>(h.rows()), nt = static_cast<int>(h.cols());
  CMatrix out = CMatrix::Zero(crop, nt);
  for (int p = 0; p < crop; ++p)
    for (int q = 0; q < nt; ++q) {
      cplx acc = 0;
      for (int n = 0; n < ns; ++n)
        for (int k = 0; k < nt; ++k)
          acc += h(n, k) * std::polar(1.0, 2 * kPi * p * n / ns) *
                 std::polar(1.0, -2 * kPi * q * k / nt);
      out(p, q) = acc / std::sqrt(double(ns) * nt);
    }
  return out;
}

std::vector<PathParams> random_paths(int l, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PathParams> ps(l);
  for (auto& p : ps) {
    p.alpha = u(rng);
    p.phi = 2 * kPi * u(rng);
    p.tau = 50e-9 * u(rng);
    p.theta = (u(rng) - 0.5) * 2.0;
  }
  return ps;
}

}  // namespace

TEST_CASE("steering vector at pi/6 with half-wavelength spacing") {
  const double f = 28e9;
  ArrayGeometry g;
  g.n_antennas = 2;
  g.spacing_d = kSpeedOfLight / (2 * f);
  g.subcarrier_hz = {f};
  const CVector a = steering_vector(kPi / 6, f, g);
  REQUIRE(a.size() == 2);
  CHECK(std::abs(a(0) - cplx(1, 0)) < 1e-12);
  CHECK(std::abs(a(1) - std::polar(1.0, -kPi / 2)) < 1e-12);
}

TEST_CASE("steering vector symmetry and unit modulus") {
  const auto g = small_geometry(16, 4);
  for (double theta : {-1.2, -0.3, 0.0, 0.7, 1.4}) {
    const CVector a = steering_vector(theta, g.subcarrier_hz[2], g);
    const CVector b = steering_vector(-theta, g.subcarrier_hz[2], g);
    CHECK((a.conjugate() - b).norm() < 1e-12);
    for (int k = 0; k < a.size(); ++k) CHECK(std::abs(std::abs(a(k)) - 1.0) < 1e-12);
  }
}

TEST_CASE("gen_channel single path rows are steering vectors") {
  const auto g = small_geometry(8, 6);
  PathParams p;
  p.alpha = 1.0;
  p.theta = 0.4;
  const auto h = gen_channel(std::span<const PathParams>(&p, 1), g);
  for (int n = 0; n < 6; ++n) {
    const CVector a = steering_vector(0.4, g.subcarrier_hz[n], g);
    CHECK((h.values.row(n).transpose() - a).norm() < 1e-12);
  }
}

TEST_CASE("gen_channel opposite phases cancel") {
  const auto g = small_geometry(8, 6);
  PathParams p{0.8, 0.3, 20e-9, -0.5};
  PathParams q = p;
  q.phi += kPi;
  const std::vector<PathParams> ps{p, q};
  CHECK(gen_channel(ps, g).values.norm() < 1e-12);
}

TEST_CASE("gen_channel matches the literal sum and is linear in gains") {
  std::mt19937_64 rng(9);
  const auto g = small_geometry(16, 32);
  const auto ps = random_paths(5, rng);
  const CMatrix h = gen_channel(ps, g).values;
  CHECK((h - naive_channel(ps, g)).cwiseAbs().maxCoeff() <= 1e-12);

  // Scaling alpha and shifting phi scales each path by a complex gain.
  auto ps2 = ps;
  ps2[0].alpha *= 2.0;
  ps2[2].phi += kPi / 3;
  CMatrix expect = h;
  for (int i : {0, 2}) {
    const std::vector<PathParams> one{ps[i]};
    const cplx gain = i == 0 ? cplx(1.0, 0.0) : std::polar(1.0, kPi / 3) - 1.0;
    expect += gain * gen_channel(one, g).values;
  }
  CHECK((gen_channel(ps2, g).values - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gen_channel rejects empty path lists and bad parameters") {
  const auto g = small_geometry(4, 4);
  CHECK_THROWS_AS(gen_channel(std::vector<PathParams>{}, g), InvalidArgument);
  PathParams bad;
  bad.theta = kPi / 2;
  CHECK_THROWS_AS(gen_channel(std::vector<PathParams>{bad}, g), InvalidArgument);
}

TEST_CASE("add_awgn") {
  std::mt19937_64 rng(1);
  const ChannelMatrix h(random_cmatrix(100, 100, rng));

  SUBCASE("infinite SNR leaves the input unchanged") {
    const auto n = add_awgn(h, kNoiseless, 5);
    CHECK(n.sigma2 == 0.0);
    CHECK(n.values.values == h.values);
  }
  SUBCASE("0 dB noise energy matches signal energy") {
    const auto n = add_awgn(h, 0.0, 5);
    const double ratio = (n.values.values - h.values).squaredNorm() /
                         h.values.squaredNorm();
    CHECK(ratio >= 0.95);
    CHECK(ratio <= 1.05);
  }
  SUBCASE("deterministic per seed") {
    CHECK(add_awgn(h, 10.0, 7).values.values == add_awgn(h, 10.0, 7).values.values);
    CHECK(add_awgn(h, 10.0, 7).values.values != add_awgn(h, 10.0, 8).values.values);
  }
  SUBCASE("noise is uncorrelated with the channel") {
    const auto n = add_awgn(h, 0.0, 11);
    const CMatrix w = n.values.values - h.values;
    const cplx c = (w.array() * h.values.array().conjugate()).sum();
    const double rho = std::abs(c) / (w.norm() * h.values.norm());
    CHECK(rho <= 3.0 / std::sqrt(double(h.values.size())));
  }
}

TEST_CASE("sf2ad of an all-ones channel is a single DC coefficient") {
  const int ns = 16, nt = 8;
  const ChannelMatrix h(CMatrix::Ones(ns, nt));
  const auto hb = sf2ad(h, 4);
  CHECK(std::abs(hb.values(0, 0) - std::sqrt(double(ns * nt))) < 1e-12);
  CMatrix rest = hb.values;
  rest(0, 0) = 0;
  CHECK(rest.norm() < 1e-12);
}

TEST_CASE("sf2ad matches the direct DFT sum") {
  std::mt19937_64 rng(2);
  const ChannelMatrix h(random_cmatrix(16, 8, rng));
  CHECK((sf2ad(h, 6).values - naive_sf2ad(h.values, 6)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("domain transforms round trip and preserve energy") {
  std::mt19937_64 rng(3);
  const DftPlan plan(64, 32, 32);
  const AngularCsi hb(random_cmatrix(32, 32, rng));
  const auto back = plan.sf2ad(plan.ad2sf(hb));
  CHECK((back.values - hb.values).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(plan.ad2sf(hb).values.squaredNorm() - hb.values.squaredNorm()) <=
        1e-10 * hb.values.squaredNorm());

  const ChannelMatrix h(random_cmatrix(64, 32, rng));
  const CMatrix full = plan.forward_full(h.values);
  CHECK(std::abs(full.squaredNorm() - h.values.squaredNorm()) <=
        1e-10 * h.values.squaredNorm());

  CHECK(plan.sf2ad(ChannelMatrix::zeros(64, 32)).values.norm() == 0.0);
  CHECK(plan.ad2sf(AngularCsi(CMatrix::Zero(32, 32))).values.norm() == 0.0);
}

TEST_CASE("crop larger than the subcarrier count is rejected") {
  CHECK_THROWS_AS(DftPlan(16, 8, 17), DimensionError);
  CHECK_THROWS_AS(sf2ad(ChannelMatrix::zeros(16, 8), 17), DimensionError);
}

TEST_CASE("cropped angular-delay form keeps the channel energy") {
  ChannelConfig cfg;  // desk scale
  const DftPlan plan(cfg.n_subcarriers, cfg.n_antennas, cfg.crop_rows);
  double kept = 0, total = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto h = draw_channel(cfg, s);
    kept += plan.sf2ad(h).values.squaredNorm();
    total += h.values.squaredNorm();
  }
  CHECK(kept / total >= 0.99);
}

TEST_CASE("normalize_power") {
  std::mt19937_64 rng(4);
  const ChannelMatrix h(random_cmatrix(8, 4, rng, 3.0));
  CHECK(std::abs(normalize_power(h).values.squaredNorm() - 32.0) < 1e-9);
  CHECK_THROWS_AS(normalize_power(ChannelMatrix::zeros(8, 4)), NumericError);
}

TEST_CASE("gen_dataset") {
  DatasetConfig cfg;
  cfg.n_train = 3;
  cfg.n_val = 2;
  cfg.n_test = 2;
  const Dataset a = gen_dataset(cfg, 42);
  const Dataset b = gen_dataset(cfg, 42);
  REQUIRE(a.train.size() == 3);
  REQUIRE(a.val.size() == 2);
  REQUIRE(a.test.size() == 2);
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    CHECK(a.test[i].noisy.values == b.test[i].noisy.values);
    CHECK(a.test[i].sigma2 == b.test[i].sigma2);
  }
  CHECK(a.train[0].clean.values != gen_dataset(cfg, 43).train[0].clean.values);
  for (const auto& s : a.train) {
    CHECK(s.clean_ad.crop_rows() == cfg.channel.crop_rows);
    CHECK(std::abs(s.clean.values.squaredNorm() - 64.0 * 32.0) < 1e-6);
  }

  SUBCASE("paper-scale dimensions are accepted") {
    DatasetConfig big;
    big.channel.n_subcarriers = 256;
    big.n_train = 1;
    big.n_val = 0;
    big.n_test = 0;
    const Dataset d = gen_dataset(big, 1);
    CHECK(d.train[0].clean.subcarriers() == 256);
    CHECK(d.train[0].clean_ad.crop_rows() == 32);
  }
  SUBCASE("invalid configs are rejected") {
    DatasetConfig bad = cfg;
    bad.channel.crop_rows = 65;
    CHECK_THROWS_AS(gen_dataset(bad, 1), InvalidArgument);
  }
}
