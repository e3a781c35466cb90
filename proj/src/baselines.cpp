#include "pnpcsi/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

#include "pnpcsi/io.hpp"

namespace pnpcsi {

namespace {

// (R + sigma2 I)^-1 applied from the right: returns B (R + sigma2 I)^-1.
CMatrix right_solve(const CMatrix& b, const CMatrix& r, double sigma2) {
  const Eigen::Index n = r.rows();
  CMatrix reg = r + sigma2 * CMatrix::Identity(n, n);
  if (sigma2 == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(reg);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(es.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300)))
      throw NumericError(
          "LMMSE: pilot correlation is singular and sigma2 = 0; "
          "a positive noise variance is required as regularization");
  }
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(reg);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("LMMSE: factorization of R + sigma2 I failed");
  // X (R + s I) = B  <=>  (R + s I) X^H = B^H (R is Hermitian).
  const Eigen::MatrixXcd xh = ldlt.solve(Eigen::MatrixXcd(b.adjoint()));
  return xh.adjoint();
}

void check_train(std::span<const ChannelMatrix> train,
                 const PilotPattern& pattern, double sigma2) {
  if (train.empty()) throw InvalidArgument("LMMSE training set is empty");
  if (!(sigma2 >= 0.0)) throw InvalidArgument("sigma2 must be >= 0");
  for (const auto& h : train)
    if (h.subcarriers() != pattern.subcarriers() ||
        h.antennas() != pattern.antennas())
      throw DimensionError("LMMSE training channel does not match the pattern");
}

}  // namespace

LmmseFilter fit_lmmse(std::span<const ChannelMatrix> train,
                      const PilotPattern& pattern, double sigma2, int column) {
  check_train(train, pattern, sigma2);
  if (column < 0 || column >= pattern.antennas())
    throw InvalidArgument("LMMSE column out of range");
  LmmseFilter f;
  f.column = column;
  f.sigma2 = sigma2;
  f.pilot_rows = pattern.pilot_rows(column);
  if (f.pilot_rows.empty())
    throw InvalidArgument("column " + std::to_string(column) + " has no pilots");
  const int n_s = pattern.subcarriers();
  const int n_p = static_cast<int>(f.pilot_rows.size());
  f.r_h_hp = CMatrix::Zero(n_s, n_p);
  f.r_hp_hp = CMatrix::Zero(n_p, n_p);
  CVector hp(n_p);
  for (const auto& h : train) {
    const CVector col = h.values.col(column);
    for (int k = 0; k < n_p; ++k) hp(k) = col(f.pilot_rows[k]);
    f.r_h_hp.noalias() += col * hp.adjoint();
    f.r_hp_hp.noalias() += hp * hp.adjoint();
  }
  const double inv = 1.0 / static_cast<double>(train.size());
  f.r_h_hp *= inv;
  f.r_hp_hp *= inv;
  f.a_lmmse = right_solve(f.r_h_hp, f.r_hp_hp, sigma2);
  return f;
}

std::vector<LmmseFilter> fit_lmmse_all(std::span<const ChannelMatrix> train,
                                       const PilotPattern& pattern,
                                       double sigma2) {
  std::vector<LmmseFilter> out;
  for (int c = 0; c < pattern.antennas(); ++c)
    out.push_back(fit_lmmse(train, pattern, sigma2, c));
  return out;
}

ChannelMatrix lmmse_estimate(const PilotObservation& obs,
                             const PilotPattern& pattern,
                             const std::vector<LmmseFilter>& filters) {
  const int n_s = pattern.subcarriers();
  const int n_t = pattern.antennas();
  if (static_cast<int>(filters.size()) != n_t)
    throw InvalidArgument("expected one LMMSE filter per antenna");
  for (int c = 0; c < n_t; ++c) {
    const auto& f = filters[c];
    if (f.column != c || f.pilot_rows != pattern.pilot_rows(c) ||
        f.a_lmmse.rows() != n_s)
      throw InvalidArgument("LMMSE filter for column " + std::to_string(c) +
                            " was fitted for a different pilot pattern");
  }
  const ChannelMatrix ls = ls_init(obs, pattern);
  CMatrix out(n_s, n_t);
  for (int c = 0; c < n_t; ++c) {
    const auto& f = filters[c];
    CVector hp(f.pilot_rows.size());
    for (std::size_t k = 0; k < f.pilot_rows.size(); ++k)
      hp(static_cast<Eigen::Index>(k)) = ls.values(f.pilot_rows[k], c);
    out.col(c) = f.a_lmmse * hp;
  }
  return ChannelMatrix(std::move(out));
}

JointLmmse fit_joint_lmmse(std::span<const ChannelMatrix> train,
                           const PilotPattern& pattern, double sigma2) {
  check_train(train, pattern, sigma2);
  JointLmmse f;
  f.n_subcarriers = pattern.subcarriers();
  f.n_antennas = pattern.antennas();
  f.sigma2 = sigma2;
  for (int r = 0; r < f.n_subcarriers; ++r)
    for (int c = 0; c < f.n_antennas; ++c)
      if (pattern.is_pilot(r, c)) f.pilots.emplace_back(r, c);
  const Eigen::Index n = static_cast<Eigen::Index>(f.n_subcarriers) * f.n_antennas;
  const Eigen::Index p = static_cast<Eigen::Index>(f.pilots.size());
  if (p == 0) throw InvalidArgument("pilot pattern is empty");

  // Stack samples as columns so the correlations are two GEMMs.
  Eigen::MatrixXcd hs(n, static_cast<Eigen::Index>(train.size()));
  Eigen::MatrixXcd ps(p, static_cast<Eigen::Index>(train.size()));
  for (std::size_t s = 0; s < train.size(); ++s) {
    const auto j = static_cast<Eigen::Index>(s);
    hs.col(j) = Eigen::Map<const CVector>(train[s].values.data(), n);
    for (Eigen::Index k = 0; k < p; ++k)
      ps(k, j) = train[s].values(f.pilots[k].first, f.pilots[k].second);
  }
  const double inv = 1.0 / static_cast<double>(train.size());
  const CMatrix r_h_hp = (hs * ps.adjoint()) * inv;
  const CMatrix r_hp_hp = (ps * ps.adjoint()) * inv;
  f.a_lmmse = right_solve(r_h_hp, r_hp_hp, sigma2);
  return f;
}

ChannelMatrix joint_lmmse_estimate(const PilotObservation& obs,
                                   const JointLmmse& filter) {
  if (obs.y.rows() != filter.n_subcarriers || obs.y.cols() != filter.n_antennas)
    throw DimensionError("observation does not match the joint LMMSE filter");
  CVector hp(filter.pilots.size());
  for (std::size_t k = 0; k < filter.pilots.size(); ++k) {
    const auto [r, c] = filter.pilots[k];
    if (obs.x(r, c) == cplx(0.0, 0.0))
      throw InvalidArgument("observation has no pilot at a filter position");
    hp(static_cast<Eigen::Index>(k)) = obs.y(r, c) / obs.x(r, c);
  }
  const CVector h = filter.a_lmmse * hp;
  CMatrix out = Eigen::Map<const CMatrix>(h.data(), filter.n_subcarriers,
                                          filter.n_antennas);
  return ChannelMatrix(std::move(out));
}

ChannelMatrix ls_estimate(const PilotObservation& obs,
                          const PilotPattern& pattern) {
  return ls_init(obs, pattern);
}

ChannelMatrix spline_extrapolate(const CMatrix& h_tilde,
                                 const AntennaSelection& sel) {
  return spline_init(h_tilde, sel);
}

void save_filters(const std::string& path,
                  const std::vector<LmmseFilter>& filters) {
  std::vector<NamedTensor> ts;
  for (const auto& f : filters) {
    const std::string pre = "col" + std::to_string(f.column);
    std::vector<float> rows(f.pilot_rows.begin(), f.pilot_rows.end());
    ts.push_back({pre + ".pilot_rows",
                  {static_cast<std::uint32_t>(rows.size())},
                  rows});
    ts.push_back({pre + ".sigma2", {1}, {static_cast<float>(f.sigma2)}});
    ts.push_back(complex_tensor(pre + ".a_lmmse", f.a_lmmse));
    ts.push_back(complex_tensor(pre + ".r_h_hp", f.r_h_hp));
    ts.push_back(complex_tensor(pre + ".r_hp_hp", f.r_hp_hp));
  }
  write_tensors(path, ts);
}

std::vector<LmmseFilter> load_filters(const std::string& path) {
  const auto ts = read_tensors(path);
  std::vector<LmmseFilter> out;
  for (int c = 0;; ++c) {
    const std::string pre = "col" + std::to_string(c);
    bool present = false;
    for (const auto& t : ts) present = present || t.name == pre + ".a_lmmse";
    if (!present) break;
    LmmseFilter f;
    f.column = c;
    for (float r : find_tensor(ts, pre + ".pilot_rows").data)
      f.pilot_rows.push_back(static_cast<int>(r));
    f.sigma2 = find_tensor(ts, pre + ".sigma2").data.at(0);
    f.a_lmmse = tensor_complex(find_tensor(ts, pre + ".a_lmmse"));
    f.r_h_hp = tensor_complex(find_tensor(ts, pre + ".r_h_hp"));
    f.r_hp_hp = tensor_complex(find_tensor(ts, pre + ".r_hp_hp"));
    out.push_back(std::move(f));
  }
  if (out.empty()) throw IoError("'" + path + "' holds no LMMSE filters");
  return out;
}

}  // namespace pnpcsi
