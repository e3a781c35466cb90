#include "pnpcsi/channel_model.hpp"

#include <cmath>
#include <numbers>

namespace pnpcsi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

CMatrix unitary_dft(int n, double sign) {
  CMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < n; ++k) {
    for (int m = 0; m < n; ++m) {
      // Reduce k*m mod n first so the angle stays small and exact.
      const double idx = static_cast<double>((static_cast<long long>(k) * m) % n);
      f(k, m) = std::polar(scale, sign * kTwoPi * idx / n);
    }
  }
  return f;
}

}  // namespace

void PathParams::validate() const {
  if (!(alpha >= 0.0)) throw InvalidArgument("path attenuation must be >= 0");
  if (!(tau >= 0.0)) throw InvalidArgument("path delay must be >= 0");
  if (!(theta > -std::numbers::pi / 2 && theta < std::numbers::pi / 2))
    throw InvalidArgument("angle of arrival must lie in (-pi/2, pi/2)");
  if (!std::isfinite(phi)) throw InvalidArgument("path phase must be finite");
}

ArrayGeometry ArrayGeometry::uniform(int n_antennas, int n_subcarriers,
                                     double carrier_hz,
                                     double subcarrier_spacing_hz) {
  ArrayGeometry g;
  g.n_antennas = n_antennas;
  g.spacing_d = kSpeedOfLight / (2.0 * carrier_hz);
  g.subcarrier_hz.resize(n_subcarriers);
  for (int n = 0; n < n_subcarriers; ++n)
    g.subcarrier_hz[n] = carrier_hz + n * subcarrier_spacing_hz;
  return g;
}

void ArrayGeometry::validate() const {
  if (n_antennas <= 0) throw InvalidArgument("n_antennas must be positive");
  if (!(spacing_d > 0.0)) throw InvalidArgument("antenna spacing must be > 0");
  if (!(light_speed_c > 0.0)) throw InvalidArgument("light speed must be > 0");
  if (subcarrier_hz.empty()) throw InvalidArgument("no subcarriers");
  for (std::size_t i = 1; i < subcarrier_hz.size(); ++i)
    if (!(subcarrier_hz[i] > subcarrier_hz[i - 1]))
      throw InvalidArgument("subcarrier frequencies must strictly increase");
}

CVector steering_vector(double theta, double f_n, const ArrayGeometry& geom) {
  CVector a(geom.n_antennas);
  const double step =
      -kTwoPi * geom.spacing_d * f_n * std::sin(theta) / geom.light_speed_c;
  for (int k = 0; k < geom.n_antennas; ++k) a(k) = std::polar(1.0, step * k);
  return a;
}

ChannelMatrix gen_channel(std::span<const PathParams> paths,
                          const ArrayGeometry& geom) {
  if (paths.empty()) throw InvalidArgument("no propagation paths");
  geom.validate();
  for (const auto& p : paths) p.validate();

  const int n_s = geom.n_subcarriers();
  CMatrix h = CMatrix::Zero(n_s, geom.n_antennas);
  for (const auto& p : paths) {
    for (int n = 0; n < n_s; ++n) {
      const double f = geom.subcarrier_hz[n];
      // f * tau is ~1e3 cycles; reduce it in extended precision so the
      // wrapped phase keeps full double accuracy.
      const long double cycles =
          std::fmod(static_cast<long double>(f) * p.tau, 1.0L);
      const double delay_phase = -kTwoPi * static_cast<double>(cycles);
      const cplx gain = std::polar(p.alpha, delay_phase + p.phi);
      h.row(n) += gain * steering_vector(p.theta, f, geom).transpose();
    }
  }
  return ChannelMatrix(std::move(h));
}

ChannelMatrix normalize_power(const ChannelMatrix& h) {
  const double energy = h.values.squaredNorm();
  if (!(energy > 0.0) || !std::isfinite(energy))
    throw NumericError("cannot normalize a zero or non-finite channel");
  const double target = static_cast<double>(h.values.size());
  return ChannelMatrix(h.values * std::sqrt(target / energy));
}

void add_complex_noise(CMatrix& m, double sigma2, std::mt19937_64& rng) {
  if (sigma2 <= 0.0) return;
  std::normal_distribution<double> gauss(0.0, std::sqrt(sigma2 / 2.0));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    m.data()[i] += cplx(re, im);
  }
}

NoisyChannel add_awgn(const ChannelMatrix& h, double snr_db,
                      std::uint64_t seed) {
  NoisyChannel out{h, 0.0};
  if (std::isinf(snr_db) && snr_db > 0) return out;
  const double signal = h.values.squaredNorm() / h.values.size();
  out.sigma2 = std::pow(10.0, -snr_db / 10.0) * signal;
  std::mt19937_64 rng(seed);
  add_complex_noise(out.values.values, out.sigma2, rng);
  return out;
}

DftPlan::DftPlan(int n_subcarriers, int n_antennas, int crop_rows)
    : n_s_(n_subcarriers), n_t_(n_antennas), crop_(crop_rows) {
  if (n_s_ <= 0 || n_t_ <= 0 || crop_ <= 0)
    throw DimensionError("DFT dimensions must be positive");
  if (crop_ > n_s_)
    throw DimensionError("crop_rows " + std::to_string(crop_) +
                         " exceeds subcarrier count " + std::to_string(n_s_));
  fs_ = unitary_dft(n_s_, +1.0);
  fs_crop_ = fs_.topRows(crop_);
  fs_crop_inv_ = fs_crop_.adjoint();
  ft_ = unitary_dft(n_t_, -1.0);
  ft_inv_ = ft_.adjoint();
}

AngularCsi DftPlan::sf2ad(const ChannelMatrix& h) const {
  if (h.subcarriers() != n_s_ || h.antennas() != n_t_)
    throw DimensionError("sf2ad: channel shape does not match the plan");
  return AngularCsi(fs_crop_ * h.values * ft_);
}

ChannelMatrix DftPlan::ad2sf(const AngularCsi& hbar) const {
  if (hbar.crop_rows() != crop_ || hbar.antennas() != n_t_)
    throw DimensionError("ad2sf: angular CSI shape does not match the plan");
  return ChannelMatrix(fs_crop_inv_ * hbar.values * ft_inv_);
}

CMatrix DftPlan::forward_full(const CMatrix& h) const {
  if (h.rows() != n_s_ || h.cols() != n_t_)
    throw DimensionError("forward_full: shape mismatch");
  return fs_ * h * ft_;
}

AngularCsi sf2ad(const ChannelMatrix& h, int crop_rows) {
  if (crop_rows > h.subcarriers())
    throw DimensionError("crop_rows exceeds the number of subcarriers");
  return DftPlan(h.subcarriers(), h.antennas(), crop_rows).sf2ad(h);
}

ChannelMatrix ad2sf(const AngularCsi& hbar, int n_subcarriers) {
  if (hbar.crop_rows() > n_subcarriers)
    throw DimensionError("angular CSI has more rows than subcarriers");
  return DftPlan(n_subcarriers, hbar.antennas(), hbar.crop_rows()).ad2sf(hbar);
}

ArrayGeometry ChannelConfig::geometry() const {
  return ArrayGeometry::uniform(n_antennas, n_subcarriers, carrier_hz,
                                subcarrier_spacing_hz());
}

void ChannelConfig::validate() const {
  if (n_subcarriers <= 0 || n_antennas <= 0)
    throw InvalidArgument("grid dimensions must be positive");
  if (crop_rows <= 0 || crop_rows > n_subcarriers)
    throw InvalidArgument("crop_rows must lie in [1, n_subcarriers]");
  if (n_paths < 1) throw InvalidArgument("no propagation paths");
  if (!(carrier_hz > 0.0) || !(bandwidth_hz > 0.0) || fft_size <= 0)
    throw InvalidArgument("carrier, bandwidth and fft_size must be positive");
  if (!(max_angle > 0.0 && max_angle < std::numbers::pi / 2))
    throw InvalidArgument("max_angle must lie in (0, pi/2)");
  if (!(delay_offset_taps >= 0.0))
    throw InvalidArgument("delay_offset_taps must be >= 0");
}

std::vector<PathParams> sample_paths(const ChannelConfig& cfg,
                                     std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double t_max = cfg.max_excess_delay_s();
  const double t_offset = cfg.delay_offset_taps * cfg.delay_tap_s();

  std::vector<PathParams> paths(cfg.n_paths);
  for (int l = 0; l < cfg.n_paths; ++l) {
    const double power = std::pow(10.0, -cfg.path_decay_db * l / 10.0);
    const double re = gauss(rng);
    const double im = gauss(rng);
    // Rayleigh amplitude with E[alpha^2] = power.
    paths[l].alpha = std::sqrt(power / 2.0) * std::hypot(re, im);
    paths[l].phi = 2.0 * std::numbers::pi * unit(rng);
    paths[l].tau = t_offset + t_max * unit(rng);
    paths[l].theta = cfg.max_angle * (2.0 * unit(rng) - 1.0);
  }
  return paths;
}

ChannelMatrix draw_channel(const ChannelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto geom = cfg.geometry();
  // A zero channel has probability zero but would break normalization.
  for (int attempt = 0;; ++attempt) {
    const auto paths = sample_paths(cfg, rng);
    ChannelMatrix h = gen_channel(paths, geom);
    if (h.values.squaredNorm() > 0.0 || attempt > 8) return normalize_power(h);
  }
}

void DatasetConfig::validate() const {
  channel.validate();
  if (n_train <= 0 && n_val <= 0 && n_test <= 0)
    throw InvalidArgument("dataset must contain at least one sample");
  if (n_train < 0 || n_val < 0 || n_test < 0)
    throw InvalidArgument("sample counts must be non-negative");
  if (!(snr_min_db <= snr_max_db)) throw InvalidArgument("snr range inverted");
}

void fill_angular(Sample& s, const DftPlan& plan) {
  s.clean_ad = plan.sf2ad(s.clean);
  s.noisy_ad = plan.sf2ad(s.noisy);
}

Dataset gen_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto& ch = cfg.channel;
  const DftPlan plan(ch.n_subcarriers, ch.n_antennas, ch.crop_rows);

  Dataset ds;
  ds.n_subcarriers = ch.n_subcarriers;
  ds.n_antennas = ch.n_antennas;
  ds.crop_rows = ch.crop_rows;

  auto make = [&](std::uint64_t index) {
    const std::uint64_t s = derive_seed(seed, index);
    Sample out;
    out.clean = draw_channel(ch, derive_seed(s, 0));
    std::mt19937_64 rng(derive_seed(s, 1));
    const double snr = std::uniform_real_distribution<double>(
        cfg.snr_min_db, cfg.snr_max_db)(rng);
    auto noisy = add_awgn(out.clean, snr, derive_seed(s, 2));
    out.noisy = std::move(noisy.values);
    out.sigma2 = noisy.sigma2;
    fill_angular(out, plan);
    return out;
  };

  std::uint64_t index = 0;
  for (int i = 0; i < cfg.n_train; ++i) ds.train.push_back(make(index++));
  for (int i = 0; i < cfg.n_val; ++i) ds.val.push_back(make(index++));
  for (int i = 0; i < cfg.n_test; ++i) ds.test.push_back(make(index++));
  return ds;
}

}  // namespace pnpcsi
