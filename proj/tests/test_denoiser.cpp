#include <doctest.h>

#include <cmath>
#include <random>

#include "pnpcsi/denoiser.hpp"
#include "pnpcsi/metrics.hpp"
#include "test_util.hpp"

using namespace pnpcsi;
using pnpcsi::testing::random_cmatrix;

namespace {

DenoiserArch micro_arch() {
  DenoiserArch a;
  a.width = 4;
  a.mid_layers = 0;  // two conv layers
  return a;
}

DenoiserArch small_arch() {
  DenoiserArch a;
  a.width = 16;
  a.mid_layers = 2;
  return a;
}

// Small desk-shaped dataset plus a model trained on it, shared by the
// evaluation cases below.
struct Trained {
  static constexpr double kTopSnrDb = 40.0;
  Dataset data;
  TrainResult result;

  Trained() {
    DatasetConfig cfg;
    cfg.n_train = 1200;
    cfg.n_val = 100;
    cfg.n_test = 60;
    data = gen_dataset(cfg, 2024);
    TrainConfig tc;
    tc.batch_size = 32;
    tc.epochs = 90;
    tc.initial_lr = 3e-3;
    tc.seed = 5;
    result = train(data, small_arch(), tc);
  }

  static const Trained& get() {
    static const Trained t;
    return t;
  }
};

// Clean/noisy angular pairs at a fixed SNR.
struct FixedSnr {
  std::vector<CMatrix> clean, noisy;
  std::vector<double> sigma2;
};

FixedSnr at_snr(const Dataset& ds, double snr_db) {
  const DftPlan plan(ds.n_subcarriers, ds.n_antennas, ds.crop_rows);
  FixedSnr f;
  std::uint64_t seed = 100;
  for (const auto& s : ds.test) {
    const auto n = add_awgn(s.clean, snr_db, seed++);
    f.clean.push_back(s.clean_ad.values);
    f.noisy.push_back(plan.sf2ad(n.values).values);
    f.sigma2.push_back(n.sigma2);
  }
  return f;
}

}  // namespace

TEST_CASE("paper architecture parameter count") {
  const DenoiserArch a;
  const auto w = DenoiserWeights::zeros(a);
  CHECK(w.parameter_count() == 174968);
  CHECK(w.parameter_count() >= 165000);
  CHECK(w.parameter_count() <= 185000);
  CHECK(w.layers.size() == 10);
  CHECK(w.names.front() == "conv0");
  CHECK(w.layers.front().cin == 12);
  CHECK(w.layers.back().cout == 8);
}

TEST_CASE("zero weights produce a zero estimate") {
  std::mt19937_64 rng(1);
  const AngularCsi x(random_cmatrix(32, 32, rng));
  const auto y = denoise(x, 0.1, DenoiserWeights::zeros(DenoiserArch{}));
  CHECK(y.values.norm() == 0.0);
}

TEST_CASE("denoise validates its inputs") {
  std::mt19937_64 rng(2);
  const auto w = DenoiserWeights::he_uniform(micro_arch(), 1);
  CHECK_THROWS_AS(denoise(AngularCsi(random_cmatrix(8, 8, rng)), -1.0, w),
                  InvalidArgument);
  CHECK_THROWS_AS(denoise(AngularCsi(random_cmatrix(7, 8, rng)), 0.1, w),
                  DimensionError);
  auto bad = w;
  bad.layers[1].cin = 5;
  CHECK_THROWS_AS(Denoiser{bad}, DimensionError);
}

TEST_CASE("normalized denoiser is scale equivariant") {
  std::mt19937_64 rng(3);
  const Denoiser d(DenoiserWeights::he_uniform(small_arch(), 4));
  const CMatrix x = random_cmatrix(16, 16, rng);
  const CMatrix y1 = d(AngularCsi(x), 0.2).values;
  const CMatrix y2 = d(AngularCsi(4.0 * x), 0.2 * 16.0).values;
  CHECK((y2 - 4.0 * y1).norm() <= 1e-5 * y2.norm());
}

TEST_CASE("network gradient matches central differences") {
  std::mt19937_64 rng(6);
  auto net = DenoiserWeights::he_uniform(micro_arch(), 9).as_net<double>();
  // Nonzero biases exercise their gradients too.
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& l : net.layers)
    for (auto& b : l.bias) b = u(rng);

  const CMatrix clean = random_cmatrix(8, 8, rng);
  const CMatrix noisy = clean + random_cmatrix(8, 8, rng, 0.3);
  const std::vector<TrainSample> s{{&clean, &noisy, 0.09}};

  std::vector<ConvParams<double>> grads;
  loss_and_gradient(net, s, grads);
  std::vector<ConvParams<double>> scratch;
  const double h = 1e-3;
  int checked = 0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto probe = [&](std::vector<double>& param, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double lp = loss_and_gradient(net, s, scratch);
        param[i] = keep - h;
        const double lm = loss_and_gradient(net, s, scratch);
        param[i] = keep;
        const double fd = (lp - lm) / (2 * h);
        const double den = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        CAPTURE(li);
        CAPTURE(i);
        CHECK(std::abs(fd - grad[i]) / den <= 1e-4);
        ++checked;
      }
    };
    probe(net.layers[li].weight, grads[li].weight);
    probe(net.layers[li].bias, grads[li].bias);
  }
  CHECK(checked == static_cast<int>(net.parameter_count()));
}

TEST_CASE("runner input gradient matches central differences") {
  std::mt19937 rng(8);
  auto net = DenoiserWeights::he_uniform(micro_arch(), 10).as_net<double>();
  ConvNetRunner<double> runner(net);
  const int h = 4, w = 4, cin = 12;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(cin) * h * w);
  for (auto& v : x) v = u(rng);
  std::vector<double> g(static_cast<std::size_t>(net.arch.out_channels()) * h * w);
  for (auto& v : g) v = u(rng);

  auto loss = [&](const std::vector<double>& in) {
    const auto& out = runner.forward(in, h, w);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * g[i];
    return s;
  };
  loss(x);
  std::vector<ConvParams<double>> grads;
  for (const auto& l : net.layers) {
    ConvParams<double> z = l;
    std::fill(z.weight.begin(), z.weight.end(), 0.0);
    std::fill(z.bias.begin(), z.bias.end(), 0.0);
    grads.push_back(z);
  }
  std::vector<double> din;
  runner.backward(g, grads, &din);
  REQUIRE(din.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xp = x, xm = x;
    xp[i] += 1e-3;
    xm[i] -= 1e-3;
    const double fd = (loss(xp) - loss(xm)) / 2e-3;
    CHECK(std::abs(fd - din[i]) / std::max({std::abs(fd), std::abs(din[i]), 1e-6}) <=
          1e-4);
  }
}

TEST_CASE("float and double forward passes agree") {
  std::mt19937_64 rng(11);
  const auto w = DenoiserWeights::he_uniform(small_arch(), 12);
  const CMatrix x = random_cmatrix(16, 16, rng);
  const auto netf = w.as_net<float>();
  const auto netd = w.as_net<double>();
  ConvNetRunner<float> rf(netf);
  ConvNetRunner<double> rd(netd);
  double sf = 1, sd = 1;
  const auto of = rf.forward(denoiser_input<float>(x, 0.1, w.arch, &sf), 8, 8);
  const auto od = rd.forward(denoiser_input<double>(x, 0.1, w.arch, &sd), 8, 8);
  const CMatrix yf = denoiser_output(of, 16, 16, w.arch, sf);
  const CMatrix yd = denoiser_output(od, 16, 16, w.arch, sd);
  CHECK((yf - yd).norm() <= 1e-5 * yd.norm());
  CHECK((denoise(AngularCsi(x), 0.1, w).values - yf).norm() == 0.0);
}

TEST_CASE("training on identity pairs reduces the loss") {
  DatasetConfig cfg;
  cfg.n_train = 192;
  cfg.n_val = 16;
  cfg.n_test = 1;
  const Dataset ds = gen_dataset(cfg, 3);
  std::vector<TrainSample> tr, va;
  for (const auto& s : ds.train) tr.push_back({&s.clean_ad.values, &s.clean_ad.values, 0.0});
  for (const auto& s : ds.val) va.push_back({&s.clean_ad.values, &s.clean_ad.values, 0.0});
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 20;
  tc.initial_lr = 3e-3;
  const auto r = train(tr, va, small_arch(), tc);
  REQUIRE(r.history.size() == 20);
  CHECK(r.history.back().train_loss <= r.history.front().train_loss);
  CHECK(r.history.back().train_loss < 0.5 * r.history.front().train_loss);

  SUBCASE("fixed seed gives an identical loss history") {
    const auto again = train(tr, va, small_arch(), tc);
    REQUIRE(again.history.size() == r.history.size());
    for (std::size_t i = 0; i < r.history.size(); ++i) {
      CHECK(again.history[i].train_loss == r.history[i].train_loss);
      CHECK(again.history[i].val_loss == r.history[i].val_loss);
    }
    CHECK(again.best_epoch == r.best_epoch);
  }
  SUBCASE("returned weights are the best validation epoch") {
    double best = 1e300;
    for (const auto& e : r.history) best = std::min(best, e.val_loss);
    CHECK(denoiser_loss(r.weights, va) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("training rejects empty sets and diverging runs") {
  std::vector<TrainSample> empty;
  CHECK_THROWS_AS(train(empty, empty, small_arch(), TrainConfig{}), InvalidArgument);

  DatasetConfig cfg;
  cfg.n_train = 4;
  cfg.n_val = 2;
  cfg.n_test = 1;
  const Dataset ds = gen_dataset(cfg, 4);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.epochs = 3;
  tc.initial_lr = 1e30;
  CHECK_THROWS_AS(train(ds, small_arch(), tc), NumericError);
}

TEST_CASE("trained denoiser reduces error at 10 dB") {
  const auto& t = Trained::get();
  const Denoiser d(t.result.weights);
  const auto f = at_snr(t.data, 10.0);
  std::vector<CMatrix> out;
  for (std::size_t i = 0; i < f.noisy.size(); ++i)
    out.push_back(d(AngularCsi(f.noisy[i]), f.sigma2[i]).values);
  const double in_db = nmse_db(f.noisy, f.clean);
  const double out_db = nmse_db(out, f.clean);
  MESSAGE("input " << in_db << " dB, output " << out_db << " dB");
  CHECK(out_db < in_db);
}

TEST_CASE("trained denoiser does not degrade clean input") {
  // With sigma2 = 0 the output must be no worse than 1 dB above the error
  // the same model leaves at the cleanest training SNR.
  const auto& t = Trained::get();
  const Denoiser d(t.result.weights);
  const auto f = at_snr(t.data, Trained::kTopSnrDb);
  std::vector<CMatrix> clean_out, top_out;
  for (std::size_t i = 0; i < f.clean.size(); ++i) {
    clean_out.push_back(d(AngularCsi(f.clean[i]), 0.0).values);
    top_out.push_back(d(AngularCsi(f.noisy[i]), f.sigma2[i]).values);
  }
  const double clean_db = nmse_db(clean_out, f.clean);
  const double top_db = nmse_db(top_out, f.clean);
  MESSAGE("clean input " << clean_db << " dB, top-SNR input " << top_db << " dB");
  CHECK(clean_db <= top_db + 1.0);
}

TEST_CASE("shrink_denoise") {
  std::mt19937_64 rng(13);
  const AngularCsi x(random_cmatrix(8, 8, rng));
  CHECK(shrink_denoise(x, 0.0).values == x.values);

  CMatrix m(1, 3);
  m << cplx(0.3, 0.4), cplx(3, 4), cplx(-1, 0);
  const auto y = shrink_denoise(AngularCsi(m), 1.0, 1.0);  // t = 1
  CHECK(y.values(0, 0) == cplx(0, 0));
  CHECK(std::abs(y.values(0, 1) - cplx(3, 4) * 0.8) < 1e-15);
  CHECK(y.values(0, 2) == cplx(0, 0));

  SUBCASE("improves sparse angular-delay CSI at 10 dB") {
    DatasetConfig cfg;
    cfg.n_train = 0;
    cfg.n_val = 0;
    cfg.n_test = 30;
    const auto f = at_snr(gen_dataset(cfg, 77), 10.0);
    std::vector<CMatrix> out;
    for (std::size_t i = 0; i < f.noisy.size(); ++i)
      out.push_back(shrink_denoise(AngularCsi(f.noisy[i]), f.sigma2[i]).values);
    CHECK(nmse_db(out, f.clean) < nmse_db(f.noisy, f.clean));
  }
  CHECK_THROWS_AS(shrink_denoise(x, -1.0), InvalidArgument);
}
