#pragma once

// Multipath MIMO-OFDM channel synthesis and the spatial-frequency <->
// truncated angular-delay domain transforms.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pnpcsi/common.hpp"

namespace pnpcsi {

inline constexpr double kSpeedOfLight = 299792458.0;

struct PathParams {
  double alpha = 0.0;  // attenuation, >= 0
  double phi = 0.0;    // phase shift [rad]
  double tau = 0.0;    // delay [s], >= 0
  double theta = 0.0;  // angle of arrival [rad], in (-pi/2, pi/2)

  void validate() const;
};

struct ArrayGeometry {
  int n_antennas = 0;
  double spacing_d = 0.0;             // [m]
  std::vector<double> subcarrier_hz;  // strictly increasing
  double light_speed_c = kSpeedOfLight;

  // Half-wavelength ULA over n_subcarriers tones starting at the carrier.
  static ArrayGeometry uniform(int n_antennas, int n_subcarriers,
                               double carrier_hz, double subcarrier_spacing_hz);

  int n_subcarriers() const { return static_cast<int>(subcarrier_hz.size()); }
  void validate() const;
};

// Spatial-frequency CSI: rows are subcarriers, columns are antennas.
struct ChannelMatrix {
  CMatrix values;

  ChannelMatrix() = default;
  explicit ChannelMatrix(CMatrix v) : values(std::move(v)) {}
  static ChannelMatrix zeros(int n_s, int n_t) {
    return ChannelMatrix(CMatrix::Zero(n_s, n_t));
  }

  int subcarriers() const { return static_cast<int>(values.rows()); }
  int antennas() const { return static_cast<int>(values.cols()); }
};

// First crop_rows rows of the 2-D DFT of a ChannelMatrix.
struct AngularCsi {
  CMatrix values;

  AngularCsi() = default;
  explicit AngularCsi(CMatrix v) : values(std::move(v)) {}

  int crop_rows() const { return static_cast<int>(values.rows()); }
  int antennas() const { return static_cast<int>(values.cols()); }
};

// a(theta, f)[k] = exp(-j 2 pi d f k sin(theta) / c)
CVector steering_vector(double theta, double f_n, const ArrayGeometry& geom);

// Row n = sum_l alpha_l exp(-j 2 pi f_n tau_l + j phi_l) a(theta_l, f_n)^T.
// Throws InvalidArgument("no propagation paths") for an empty list.
ChannelMatrix gen_channel(std::span<const PathParams> paths,
                          const ArrayGeometry& geom);

// Scales H so that ||H||_F^2 = N_s * N_t. Throws NumericError on a zero H.
ChannelMatrix normalize_power(const ChannelMatrix& h);

struct NoisyChannel {
  ChannelMatrix values;
  double sigma2 = 0.0;  // per-entry complex noise variance actually used
};

// H + W with W ~ CN(0, sigma2), sigma2 = 10^(-snr_db/10) * mean |h_ij|^2.
// snr_db = +inf returns H unchanged with sigma2 = 0.
NoisyChannel add_awgn(const ChannelMatrix& h, double snr_db,
                      std::uint64_t seed);

// Adds CN(0, sigma2) noise drawn from an existing engine.
void add_complex_noise(CMatrix& m, double sigma2, std::mt19937_64& rng);

// Cached unitary DFT matrices for one (N_s, N_t, crop) triple.
//
// The frequency axis uses the positive-exponent kernel so that a path with
// delay tau lands in delay row tau * N_s * delta_f; the antenna axis uses
// the conventional negative-exponent kernel. Both are unitary, so the
// round trip and Parseval hold exactly up to rounding.
class DftPlan {
 public:
  DftPlan(int n_subcarriers, int n_antennas, int crop_rows);

  int subcarriers() const { return n_s_; }
  int antennas() const { return n_t_; }
  int crop_rows() const { return crop_; }

  AngularCsi sf2ad(const ChannelMatrix& h) const;
  ChannelMatrix ad2sf(const AngularCsi& hbar) const;

  // Full (uncropped) 2-D transform.
  CMatrix forward_full(const CMatrix& h) const;

 private:
  int n_s_;
  int n_t_;
  int crop_;
  CMatrix fs_;       // N_s x N_s
  CMatrix fs_crop_;  // crop x N_s
  CMatrix fs_crop_inv_;  // N_s x crop
  CMatrix ft_;       // N_t x N_t
  CMatrix ft_inv_;   // N_t x N_t
};

AngularCsi sf2ad(const ChannelMatrix& h, int crop_rows);
ChannelMatrix ad2sf(const AngularCsi& hbar, int n_subcarriers);

// Synthetic stand-in for a ray-traced scene.
struct ChannelConfig {
  int n_subcarriers = 64;
  int n_antennas = 32;
  int crop_rows = 32;
  int n_paths = 5;
  double carrier_hz = 28e9;
  double bandwidth_hz = 200e6;
  int fft_size = 1024;  // subcarrier spacing = bandwidth / fft_size
  double path_decay_db = 3.0;
  double max_angle = 1.0471975511965976;  // pi/3
  // Receiver timing places the earliest possible arrival this many delay
  // taps (1 / (N_s * spacing)) into the angular-delay window.
  double delay_offset_taps = 6.0;

  double subcarrier_spacing_hz() const { return bandwidth_hz / fft_size; }
  double max_excess_delay_s() const { return crop_rows / bandwidth_hz; }
  double delay_tap_s() const {
    return 1.0 / (n_subcarriers * subcarrier_spacing_hz());
  }
  ArrayGeometry geometry() const;
  void validate() const;
};

std::vector<PathParams> sample_paths(const ChannelConfig& cfg,
                                     std::mt19937_64& rng);

// Draws paths, synthesizes and power-normalizes one channel.
ChannelMatrix draw_channel(const ChannelConfig& cfg, std::uint64_t seed);

struct Sample {
  ChannelMatrix clean;
  ChannelMatrix noisy;
  double sigma2 = 0.0;
  AngularCsi clean_ad;
  AngularCsi noisy_ad;
};

struct DatasetConfig {
  ChannelConfig channel;
  int n_train = 2000;
  int n_val = 500;
  int n_test = 500;
  double snr_min_db = 0.0;
  double snr_max_db = 40.0;

  void validate() const;
};

struct Dataset {
  int n_subcarriers = 0;
  int n_antennas = 0;
  int crop_rows = 0;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

// Sample i of the combined train|val|test sequence depends only on
// (seed, i).
Dataset gen_dataset(const DatasetConfig& cfg, std::uint64_t seed);

// Recomputes the angular-delay forms of a sample from its SF matrices.
void fill_angular(Sample& s, const DftPlan& plan);

}  // namespace pnpcsi
