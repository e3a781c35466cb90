#include "pnpcsi/tasks.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace pnpcsi {

namespace {

void check_rho(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw InvalidArgument("rho must be finite and > 0");
}

double noise_variance(double snr_db, double signal_power) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0) * signal_power;
}

std::vector<std::string> content_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open pattern file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(line);
  }
  return out;
}

}  // namespace

// ---- channel estimation ----------------------------------------------

PilotPattern::PilotPattern(int n_subcarriers, int n_antennas)
    : n_s_(n_subcarriers), n_t_(n_antennas) {
  if (n_s_ <= 0 || n_t_ <= 0)
    throw DimensionError("pilot grid dimensions must be positive");
  mask_.assign(static_cast<std::size_t>(n_s_) * n_t_, 0);
}

PilotPattern PilotPattern::comb(int n_subcarriers, int n_antennas, int spacing,
                                int offset) {
  if (spacing < 1) throw InvalidArgument("pilot spacing must be >= 1");
  if (offset < 0 || offset >= spacing)
    throw InvalidArgument("pilot offset must lie in [0, spacing)");
  PilotPattern p(n_subcarriers, n_antennas);
  for (int col = 0; col < n_antennas; ++col)
    for (int row = offset; row < n_subcarriers; row += spacing)
      p.set(row, col, true);
  return p;
}

PilotPattern PilotPattern::preset(const std::string& name, int n_subcarriers,
                                  int n_antennas) {
  const int wide = std::max(1, n_subcarriers / 4);
  const int dense = std::max(1, n_subcarriers / 8);
  if (name == "A") return comb(n_subcarriers, n_antennas, wide, 0);
  if (name == "B") return comb(n_subcarriers, n_antennas, wide, wide / 2);
  if (name == "C") return comb(n_subcarriers, n_antennas, dense, 0);
  if (name == "D") return comb(n_subcarriers, n_antennas, dense, dense / 2);
  throw InvalidArgument("unknown pilot pattern '" + name + "'");
}

PilotPattern PilotPattern::from_file(const std::string& path, int n_subcarriers,
                                     int n_antennas) {
  PilotPattern p(n_subcarriers, n_antennas);
  for (const auto& line : content_lines(path)) {
    std::istringstream ss(line);
    int row = -1, col = -1;
    std::string extra;
    if (!(ss >> row >> col) || (ss >> extra))
      throw InvalidArgument(path + ": expected 'subcarrier antenna', got '" +
                            line + "'");
    if (row < 0 || row >= n_subcarriers || col < 0 || col >= n_antennas)
      throw InvalidArgument(path + ": pilot position out of range: '" + line +
                            "'");
    p.set(row, col, true);
  }
  p.validate();
  return p;
}

void PilotPattern::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "# subcarrier antenna\n";
  for (int r = 0; r < n_s_; ++r)
    for (int c = 0; c < n_t_; ++c)
      if (is_pilot(r, c)) os << r << ' ' << c << '\n';
}

void PilotPattern::set(int row, int col, bool on) {
  if (row < 0 || row >= n_s_ || col < 0 || col >= n_t_)
    throw DimensionError("pilot position out of range");
  mask_[static_cast<std::size_t>(row) * n_t_ + col] = on ? 1 : 0;
}

int PilotPattern::count() const {
  return static_cast<int>(std::count(mask_.begin(), mask_.end(), 1));
}

std::vector<int> PilotPattern::pilot_rows(int col) const {
  std::vector<int> rows;
  for (int r = 0; r < n_s_; ++r)
    if (is_pilot(r, col)) rows.push_back(r);
  return rows;
}

void PilotPattern::validate() const {
  if (count() == 0) throw InvalidArgument("pilot pattern is empty");
  for (int c = 0; c < n_t_; ++c)
    if (pilot_rows(c).empty())
      throw InvalidArgument("antenna " + std::to_string(c) + " has no pilots");
}

PilotObservation observe_pilots(const ChannelMatrix& h,
                                const PilotPattern& pattern, double snr_db,
                                std::uint64_t seed) {
  if (h.subcarriers() != pattern.subcarriers() ||
      h.antennas() != pattern.antennas())
    throw DimensionError("pilot pattern does not match the channel shape");
  if (pattern.count() == 0) throw InvalidArgument("pilot pattern is empty");

  const int n_s = h.subcarriers();
  const int n_t = h.antennas();
  PilotObservation obs;
  obs.x = CMatrix::Zero(n_s, n_t);
  obs.y = CMatrix::Zero(n_s, n_t);
  const double power = h.values.squaredNorm() / static_cast<double>(h.values.size());
  obs.sigma2 = noise_variance(snr_db, power);

  std::mt19937_64 sym_rng(derive_seed(seed, 0));
  std::mt19937_64 noise_rng(derive_seed(seed, 1));
  std::uniform_int_distribution<int> quadrant(0, 3);
  std::normal_distribution<double> gauss(0.0, std::sqrt(obs.sigma2 / 2.0));
  for (int r = 0; r < n_s; ++r)
    for (int c = 0; c < n_t; ++c) {
      if (!pattern.is_pilot(r, c)) continue;
      const double angle = std::numbers::pi / 4 + std::numbers::pi / 2 * quadrant(sym_rng);
      obs.x(r, c) = std::polar(1.0, angle);
      obs.y(r, c) = h.values(r, c) * obs.x(r, c);
      if (obs.sigma2 > 0.0) {
        const double re = gauss(noise_rng);
        const double im = gauss(noise_rng);
        obs.y(r, c) += cplx(re, im);
      }
    }
  return obs;
}

ChannelMatrix ls_init(const PilotObservation& obs, const PilotPattern& pattern) {
  const int n_s = pattern.subcarriers();
  const int n_t = pattern.antennas();
  if (obs.y.rows() != n_s || obs.y.cols() != n_t || obs.x.rows() != n_s ||
      obs.x.cols() != n_t)
    throw DimensionError("observation does not match the pilot pattern");
  pattern.validate();
  CMatrix h(n_s, n_t);
  for (int c = 0; c < n_t; ++c) {
    const auto rows = pattern.pilot_rows(c);
    std::vector<cplx> est(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const cplx x = obs.x(rows[k], c);
      if (x == cplx(0.0, 0.0))
        throw NumericError("zero pilot symbol at (" + std::to_string(rows[k]) +
                           ", " + std::to_string(c) + ")");
      est[k] = obs.y(rows[k], c) / x;
    }
    std::size_t k = 0;
    for (int r = 0; r < n_s; ++r) {
      while (k + 1 < rows.size() &&
             std::abs(rows[k + 1] - r) < std::abs(rows[k] - r))
        ++k;
      h(r, c) = est[k];
    }
  }
  return ChannelMatrix(std::move(h));
}

ChannelMatrix prox_ce(const PilotObservation& obs, const PilotPattern& pattern,
                      const ChannelMatrix& z, double rho) {
  check_rho(rho);
  if (z.subcarriers() != pattern.subcarriers() ||
      z.antennas() != pattern.antennas() || obs.y.rows() != z.values.rows() ||
      obs.y.cols() != z.values.cols())
    throw DimensionError("prox_ce: shapes of Z, observation and pattern differ");
  CMatrix out = z.values;
  for (int r = 0; r < pattern.subcarriers(); ++r)
    for (int c = 0; c < pattern.antennas(); ++c) {
      if (!pattern.is_pilot(r, c)) continue;
      const cplx x = obs.x(r, c);
      out(r, c) = (std::conj(x) * obs.y(r, c) + rho * z.values(r, c)) /
                  (std::norm(x) + rho);
    }
  return ChannelMatrix(std::move(out));
}

// ---- antenna extrapolation ---------------------------------------------

AntennaSelection::AntennaSelection(int n_antennas, std::vector<int> selected)
    : n_t_(n_antennas), selected_(std::move(selected)) {
  if (n_t_ <= 0) throw InvalidArgument("n_antennas must be positive");
  std::sort(selected_.begin(), selected_.end());
  if (std::adjacent_find(selected_.begin(), selected_.end()) != selected_.end())
    throw InvalidArgument("antenna selection has duplicate indices");
  for (int i : selected_)
    if (i < 0 || i >= n_t_)
      throw InvalidArgument("antenna index " + std::to_string(i) +
                            " out of range");
  if (selected_.empty()) throw InvalidArgument("antenna selection is empty");
}

AntennaSelection AntennaSelection::preset(const std::string& name,
                                          int n_antennas) {
  int first = 0;
  if (name == "A") first = 0;
  else if (name == "B") first = 1;
  else throw InvalidArgument("unknown antenna selection '" + name + "'");
  std::vector<int> idx;
  for (int i = first; i < n_antennas; i += 2) idx.push_back(i);
  return AntennaSelection(n_antennas, std::move(idx));
}

AntennaSelection AntennaSelection::from_file(const std::string& path,
                                             int n_antennas) {
  std::vector<int> idx;
  for (const auto& line : content_lines(path)) {
    std::istringstream ss(line);
    int i = -1;
    std::string extra;
    if (!(ss >> i) || (ss >> extra))
      throw InvalidArgument(path + ": expected one antenna index, got '" +
                            line + "'");
    idx.push_back(i);
  }
  return AntennaSelection(n_antennas, std::move(idx));
}

std::vector<int> AntennaSelection::complement() const {
  std::vector<int> out;
  for (int i = 0; i < n_t_; ++i)
    if (!contains(i)) out.push_back(i);
  return out;
}

double AntennaSelection::rate() const {
  return static_cast<double>(selected_.size()) / n_t_;
}

bool AntennaSelection::contains(int col) const {
  return std::binary_search(selected_.begin(), selected_.end(), col);
}

CMatrix observe_antennas(const ChannelMatrix& h, const AntennaSelection& sel) {
  if (h.antennas() != sel.antennas())
    throw DimensionError("antenna selection does not match the channel");
  CMatrix out(h.subcarriers(), static_cast<Eigen::Index>(sel.selected().size()));
  for (std::size_t k = 0; k < sel.selected().size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = h.values.col(sel.selected()[k]);
  return out;
}

CMatrix observe_antennas(const ChannelMatrix& h, const AntennaSelection& sel,
                         double snr_db, std::uint64_t seed,
                         double* sigma2_out) {
  CMatrix out = observe_antennas(h, sel);
  const double power = h.values.squaredNorm() / static_cast<double>(h.values.size());
  const double sigma2 = noise_variance(snr_db, power);
  std::mt19937_64 rng(seed);
  add_complex_noise(out, sigma2, rng);
  if (sigma2_out != nullptr) *sigma2_out = sigma2;
  return out;
}

ChannelMatrix spline_init(const CMatrix& h_tilde, const AntennaSelection& sel) {
  const auto& xs = sel.selected();
  const int m = static_cast<int>(xs.size());
  if (m < 2)
    throw InvalidArgument("spline interpolation needs at least two antennas");
  if (h_tilde.cols() != m)
    throw DimensionError("observed CSI width does not match the selection");

  // Second-derivative system of the natural spline; depends only on the
  // knots, so it is factored once and reused for every row.
  std::vector<double> h(m - 1);
  for (int i = 0; i + 1 < m; ++i) h[i] = xs[i + 1] - xs[i];
  const int inner = m - 2;
  std::vector<double> diag(std::max(inner, 0)), upper(std::max(inner, 0));
  for (int i = 0; i < inner; ++i) {
    diag[i] = 2.0 * (h[i] + h[i + 1]);
    upper[i] = h[i + 1];
  }
  // Thomas factorization: c'_i and the modified diagonal.
  std::vector<double> dprime(diag.size()), cprime(diag.size());
  for (int i = 0; i < inner; ++i) {
    const double lower = i > 0 ? h[i] : 0.0;
    const double denom = diag[i] - (i > 0 ? lower * cprime[i - 1] : 0.0);
    dprime[i] = denom;
    cprime[i] = upper[i] / denom;
  }

  const int rows = static_cast<int>(h_tilde.rows());
  const int n_t = sel.antennas();
  CMatrix out(rows, n_t);
  std::vector<cplx> mvals(m), rhs(std::max(inner, 0));
  for (int r = 0; r < rows; ++r) {
    auto y = [&](int i) { return h_tilde(r, i); };
    for (int i = 0; i < inner; ++i)
      rhs[i] = 6.0 * ((y(i + 2) - y(i + 1)) / h[i + 1] - (y(i + 1) - y(i)) / h[i]);
    // Forward sweep then back substitution.
    for (int i = 0; i < inner; ++i) {
      const cplx prev = i > 0 ? h[i] * rhs[i - 1] : cplx(0.0, 0.0);
      rhs[i] = (rhs[i] - prev) / dprime[i];
    }
    mvals.assign(m, cplx(0.0, 0.0));
    for (int i = inner - 1; i >= 0; --i)
      mvals[i + 1] = rhs[i] - (i + 1 < inner ? cprime[i] * mvals[i + 2] : 0.0);

    int seg = 0;
    for (int col = 0; col < n_t; ++col) {
      while (seg + 2 < m && col > xs[seg + 1]) ++seg;
      const double x0 = xs[seg], x1 = xs[seg + 1], hs = h[seg];
      const double a = x1 - col, b = col - x0;
      out(r, col) = mvals[seg] * (a * a * a) / (6.0 * hs) +
                    mvals[seg + 1] * (b * b * b) / (6.0 * hs) +
                    (y(seg) / hs - mvals[seg] * hs / 6.0) * a +
                    (y(seg + 1) / hs - mvals[seg + 1] * hs / 6.0) * b;
    }
    // Interpolation conditions hold exactly on the selected columns.
    for (int i = 0; i < m; ++i) out(r, xs[i]) = y(i);
  }
  return ChannelMatrix(std::move(out));
}

ChannelMatrix prox_ae(const CMatrix& h_tilde, const AntennaSelection& sel,
                      const ChannelMatrix& z, double rho) {
  check_rho(rho);
  if (z.antennas() != sel.antennas() ||
      h_tilde.cols() != static_cast<Eigen::Index>(sel.selected().size()) ||
      h_tilde.rows() != z.values.rows())
    throw DimensionError("prox_ae: shapes of Z, observation and selection differ");
  CMatrix out = z.values;
  for (std::size_t k = 0; k < sel.selected().size(); ++k) {
    const int c = sel.selected()[k];
    out.col(c) = (h_tilde.col(static_cast<Eigen::Index>(k)) + rho * z.values.col(c)) /
                 (1.0 + rho);
  }
  return ChannelMatrix(std::move(out));
}

// ---- CSI feedback -------------------------------------------------------

int compressed_length(double cr, int n) {
  if (!(cr > 0.0 && cr <= 1.0)) throw InvalidArgument("CR must lie in (0, 1]");
  return std::max(1, static_cast<int>(std::lround(cr * n)));
}

Projection make_projection(int m, int n, std::uint64_t seed) {
  if (m <= 0 || n <= 0) throw InvalidArgument("projection sizes must be positive");
  if (m > n)
    throw InvalidArgument("projection has more rows (" + std::to_string(m) +
                          ") than columns (" + std::to_string(n) + ")");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RMatrix g(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<RMatrix> qr(g);
  RMatrix q = qr.householderQ() * RMatrix::Identity(n, m);
  // Fix column signs so the result does not depend on QR sign conventions.
  const RVector rdiag = qr.matrixQR().topRows(m).diagonal();
  for (Eigen::Index j = 0; j < m; ++j)
    if (rdiag(j) < 0) q.col(j) = -q.col(j);

  Projection p;
  p.a = q.transpose();
  // Eigen factors A = U S W^T; in the A = U S V form used by prox_cf, V = W^T.
  Eigen::BDCSVD<RMatrix> svd(p.a, Eigen::ComputeFullV);
  p.cache.v = svd.matrixV().transpose();
  return p;
}

double UniformQuantizer::step() const {
  return bits > 0 ? 2.0 * range / std::ldexp(1.0, bits) : 0.0;
}

std::uint32_t UniformQuantizer::index(double v) const {
  const double levels = std::ldexp(1.0, bits);
  if (!(range > 0.0)) return 0;
  const double q = std::floor((v + range) / step());
  return static_cast<std::uint32_t>(std::clamp(q, 0.0, levels - 1.0));
}

double UniformQuantizer::value(std::uint32_t q) const {
  if (!(range > 0.0)) return 0.0;
  return -range + (static_cast<double>(q) + 0.5) * step();
}

double FeedbackCode::step() const {
  return bits ? UniformQuantizer{*bits, range}.step() : 0.0;
}

FeedbackCode compress(const RVector& hbar, const RMatrix& a,
                      std::optional<int> bits) {
  if (hbar.size() != a.cols())
    throw DimensionError("compress: vector length " +
                         std::to_string(hbar.size()) + " != N = " +
                         std::to_string(a.cols()));
  if (bits && (*bits < 1 || *bits > 24))
    throw InvalidArgument("quantizer bits must lie in [1, 24]");
  FeedbackCode code;
  code.y = a * hbar;
  code.range = code.y.size() ? code.y.cwiseAbs().maxCoeff() : 0.0;
  code.bits = bits;
  if (bits) {
    const UniformQuantizer qz{*bits, code.range};
    code.indices.resize(code.y.size());
    for (Eigen::Index i = 0; i < code.y.size(); ++i) {
      code.indices[i] = qz.index(code.y(i));
      code.y(i) = qz.value(code.indices[i]);
    }
  }
  return code;
}

RVector vectorize(const CMatrix& m) {
  RVector v(2 * m.size());
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      v(p++) = m(i, j).real();
      v(p++) = m(i, j).imag();
    }
  return v;
}

CMatrix devectorize(const RVector& v, int rows, int cols) {
  if (v.size() != 2 * static_cast<Eigen::Index>(rows) * cols)
    throw DimensionError("devectorize: length does not match the shape");
  CMatrix m(rows, cols);
  Eigen::Index p = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j, p += 2) m(i, j) = cplx(v(p), v(p + 1));
  return m;
}

RVector prox_cf(const FeedbackCode& code, const RMatrix& a,
                const SvdCache& cache, const RVector& z, double rho) {
  check_rho(rho);
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (code.y.size() != m || z.size() != n || cache.v.rows() != n ||
      cache.v.cols() != n)
    throw DimensionError("prox_cf: dimension mismatch between y, A, V and z");
  const RVector rhs = a.transpose() * code.y + rho * z;
  // V orthogonal gives V^T diag(a I, b I) V = b I + (a - b) V_1^T V_1 with
  // V_1 the leading M rows, so only those rows are touched.
  const auto v1 = cache.v.topRows(m);
  const RVector t = v1 * rhs;
  return rhs / rho + (1.0 / (1.0 + rho) - 1.0 / rho) * (v1.transpose() * t);
}

// ---- denoiser adapters ------------------------------------------------

DenoiseFn cnn_denoiser(const Denoiser& d) {
  return [&d](const CMatrix& x, double sigma2) {
    return d(AngularCsi(x), sigma2).values;
  };
}

DenoiseFn shrink_denoiser(double kappa) {
  return [kappa](const CMatrix& x, double sigma2) {
    return shrink_denoise(AngularCsi(x), sigma2, kappa).values;
  };
}

DenoiseFn identity_denoiser() {
  return [](const CMatrix& x, double) { return x; };
}

DenoiseFn oracle_denoiser(CMatrix truth) {
  return [t = std::move(truth)](const CMatrix& x, double) {
    if (x.rows() != t.rows() || x.cols() != t.cols())
      throw DimensionError("oracle denoiser: shape mismatch");
    return t;
  };
}

// ---- PnP drivers --------------------------------------------------------

DomainBridge angular_bridge(const DftPlan& plan) {
  return DomainBridge{
      [&plan](const CMatrix& h) {
        return plan.sf2ad(ChannelMatrix(h)).values;
      },
      [&plan](const CMatrix& hbar) {
        return plan.ad2sf(AngularCsi(hbar)).values;
      }};
}

PnpResult pppce(const PilotObservation& obs, const PilotPattern& pattern,
                const DftPlan& plan, const DenoiseFn& den,
                const SolverConfig& cfg, const CMatrix* truth) {
  const ChannelMatrix z0 = ls_init(obs, pattern);
  auto prox = [&](const CMatrix& z, double rho) {
    return prox_ce(obs, pattern, ChannelMatrix(z), rho).values;
  };
  return run_pnp(prox, den, z0.values, cfg, angular_bridge(plan), truth);
}

PnpResult pppae(const CMatrix& h_tilde, const AntennaSelection& sel,
                const DftPlan& plan, const DenoiseFn& den,
                const SolverConfig& cfg, const CMatrix* truth) {
  const ChannelMatrix z0 = spline_init(h_tilde, sel);
  auto prox = [&](const CMatrix& z, double rho) {
    return prox_ae(h_tilde, sel, ChannelMatrix(z), rho).values;
  };
  return run_pnp(prox, den, z0.values, cfg, angular_bridge(plan), truth);
}

PnpResult pppcf(const FeedbackCode& code, const Projection& proj, int rows,
                int cols, const DenoiseFn& den, const SolverConfig& cfg,
                const CMatrix* truth) {
  if (proj.a.cols() != 2 * static_cast<Eigen::Index>(rows) * cols)
    throw DimensionError("projection width does not match the CSI shape");
  const CMatrix z0 = devectorize(proj.a.transpose() * code.y, rows, cols);
  auto prox = [&](const CMatrix& z, double rho) {
    return devectorize(prox_cf(code, proj.a, proj.cache, vectorize(z), rho),
                       rows, cols);
  };
  return run_pnp(prox, den, z0, cfg, std::nullopt, truth);
}

}  // namespace pnpcsi
