#pragma once

// Task heads: observation models, initializers and closed-form proximal
// steps for channel estimation (CE), antenna extrapolation (AE) and CSI
// feedback (CF), plus their PnP drivers.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pnpcsi/channel_model.hpp"
#include "pnpcsi/denoiser.hpp"
#include "pnpcsi/hqs_solver.hpp"

namespace pnpcsi {

// ---- channel estimation ----------------------------------------------

class PilotPattern {
 public:
  PilotPattern() = default;
  PilotPattern(int n_subcarriers, int n_antennas);

  // Same comb on every antenna: rows offset, offset + spacing, ...
  static PilotPattern comb(int n_subcarriers, int n_antennas, int spacing,
                           int offset);
  // A/B: spacing N_s/4 (offset 0 / spacing/2); C/D: spacing N_s/8.
  static PilotPattern preset(const std::string& name, int n_subcarriers,
                             int n_antennas);
  // Text, one "subcarrier antenna" pair per line; '#' comments allowed.
  static PilotPattern from_file(const std::string& path, int n_subcarriers,
                                int n_antennas);
  void save(const std::string& path) const;

  int subcarriers() const { return n_s_; }
  int antennas() const { return n_t_; }
  bool is_pilot(int row, int col) const {
    return mask_[static_cast<std::size_t>(row) * n_t_ + col] != 0;
  }
  void set(int row, int col, bool on);
  int count() const;
  // Sorted pilot rows of one antenna column.
  std::vector<int> pilot_rows(int col) const;
  // Throws InvalidArgument unless every column has at least one pilot.
  void validate() const;

 private:
  int n_s_ = 0;
  int n_t_ = 0;
  std::vector<std::uint8_t> mask_;
};

// Full-grid storage; entries off the pattern are zero.
struct PilotObservation {
  CMatrix x;  // pilot symbols
  CMatrix y;  // received values
  double sigma2 = 0.0;
};

// Y_p = P(H) o X_p + W_p with unit-modulus QPSK pilots. Throws
// InvalidArgument for an empty mask.
PilotObservation observe_pilots(const ChannelMatrix& h,
                                const PilotPattern& pattern, double snr_db,
                                std::uint64_t seed);

// y/x at pilots, nearest-pilot hold along frequency elsewhere (ties take the
// lower subcarrier). Throws NumericError for a zero pilot symbol.
ChannelMatrix ls_init(const PilotObservation& obs, const PilotPattern& pattern);

// Pilots: (conj(x) y + rho z) / (|x|^2 + rho); elsewhere z.
ChannelMatrix prox_ce(const PilotObservation& obs, const PilotPattern& pattern,
                      const ChannelMatrix& z, double rho);

// ---- antenna extrapolation ---------------------------------------------

class AntennaSelection {
 public:
  AntennaSelection() = default;
  // Indices are sorted; duplicates or out-of-range values throw.
  AntennaSelection(int n_antennas, std::vector<int> selected);

  // A: antennas 1, 3, 5, ... (0-based 0, 2, 4, ...); B: 0-based 1, 3, 5, ...
  static AntennaSelection preset(const std::string& name, int n_antennas);
  // Text, one antenna index per line.
  static AntennaSelection from_file(const std::string& path, int n_antennas);

  int antennas() const { return n_t_; }
  const std::vector<int>& selected() const { return selected_; }
  std::vector<int> complement() const;
  double rate() const;
  bool contains(int col) const;

 private:
  int n_t_ = 0;
  std::vector<int> selected_;
};

// Column subsampling H~ = A(H), noiseless.
CMatrix observe_antennas(const ChannelMatrix& h, const AntennaSelection& sel);
// Same with CN(0, sigma2) noise at the given SNR; sigma2 is reported.
CMatrix observe_antennas(const ChannelMatrix& h, const AntennaSelection& sel,
                         double snr_db, std::uint64_t seed,
                         double* sigma2_out = nullptr);

// Per-row natural cubic spline over antenna index (real and imaginary parts
// independently); outside the selected range the boundary cubic continues.
// Throws InvalidArgument for fewer than two selected antennas.
ChannelMatrix spline_init(const CMatrix& h_tilde, const AntennaSelection& sel);

// Selected columns: (h~ + rho z) / (1 + rho); elsewhere z.
ChannelMatrix prox_ae(const CMatrix& h_tilde, const AntennaSelection& sel,
                      const ChannelMatrix& z, double rho);

// ---- CSI feedback -------------------------------------------------------

// V with A = U [I 0] V (V orthogonal, N x N).
struct SvdCache {
  RMatrix v;
};

struct Projection {
  RMatrix a;  // M x N with orthonormal rows
  SvdCache cache;
};

// round(cr * n), at least 1.
int compressed_length(double cr, int n);

// Gaussian M x N matrix orthonormalized by QR, plus its SVD basis. Throws
// InvalidArgument for M > N or non-positive sizes.
Projection make_projection(int m, int n, std::uint64_t seed);

// Symmetric mid-rise quantizer with 2^bits levels over [-range, range].
struct UniformQuantizer {
  int bits = 0;
  double range = 0.0;

  double step() const;
  std::uint32_t index(double v) const;
  double value(std::uint32_t q) const;
};

struct FeedbackCode {
  RVector y;  // values seen by the decoder (dequantized if bits is set)
  std::optional<int> bits;
  double range = 0.0;  // side information: max |y_i| before quantization
  std::vector<std::uint32_t> indices;

  double step() const;  // 0 without quantization
};

// y = A hbar, then optional per-vector quantization.
FeedbackCode compress(const RVector& hbar, const RMatrix& a,
                      std::optional<int> bits);

// [re(0,0), im(0,0), re(0,1), ...] row-major.
RVector vectorize(const CMatrix& m);
CMatrix devectorize(const RVector& v, int rows, int cols);

// V^T diag(I_M / (1 + rho), I_{N-M} / rho) V (A^T y + rho z).
RVector prox_cf(const FeedbackCode& code, const RMatrix& a,
                const SvdCache& cache, const RVector& z, double rho);

// ---- denoiser adapters ------------------------------------------------

DenoiseFn cnn_denoiser(const Denoiser& d);
DenoiseFn shrink_denoiser(double kappa = 1.5);
DenoiseFn identity_denoiser();
// Ignores its input and returns `truth` (denoiser-domain ground truth).
DenoiseFn oracle_denoiser(CMatrix truth);

// ---- PnP drivers --------------------------------------------------------

// CE and AE iterate on the spatial-frequency grid and denoise in the
// truncated angular-delay domain. `truth` is optional (same domain as the
// result) and only feeds the trace.
PnpResult pppce(const PilotObservation& obs, const PilotPattern& pattern,
                const DftPlan& plan, const DenoiseFn& den,
                const SolverConfig& cfg, const CMatrix* truth = nullptr);

PnpResult pppae(const CMatrix& h_tilde, const AntennaSelection& sel,
                const DftPlan& plan, const DenoiseFn& den,
                const SolverConfig& cfg, const CMatrix* truth = nullptr);

// CF iterates directly on the crop_rows x N_t angular-delay matrix.
PnpResult pppcf(const FeedbackCode& code, const Projection& proj, int rows,
                int cols, const DenoiseFn& den, const SolverConfig& cfg,
                const CMatrix* truth = nullptr);

DomainBridge angular_bridge(const DftPlan& plan);

}  // namespace pnpcsi
