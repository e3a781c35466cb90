#include "pnpcsi/hqs_solver.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "pnpcsi/io.hpp"
#include "pnpcsi/metrics.hpp"

namespace pnpcsi {

double SolverConfig::rho(int t) const {
  if (t < 1) throw InvalidArgument("iteration index must be >= 1");
  return rho0 * std::pow(alpha, t - 1);
}

void SolverConfig::validate() const {
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be > 0");
  if (!(rho0 > 0.0)) throw InvalidArgument("rho0 must be > 0");
  if (!(alpha > 1.0)) throw InvalidArgument("alpha must be > 1");
  if (n_iters < 1) throw InvalidArgument("n_iters must be >= 1");
}

double sigma_schedule(const SolverConfig& cfg, int t) {
  return cfg.lambda / (2.0 * cfg.rho(t));
}

void IterationTrace::write_csv(std::ostream& os) const {
  CsvWriter csv(os);
  csv.row({"iter", "rho", "sigma2", "residual", "nmse_db"});
  for (const auto& e : entries)
    csv.row({std::to_string(e.iter), format_double(e.rho),
             format_double(e.sigma2), format_double(e.residual),
             format_double(e.nmse_db)});
}

PnpResult run_pnp(const ProxStep& prox, const DenoiseFn& den, const CMatrix& z0,
                  const SolverConfig& cfg,
                  const std::optional<DomainBridge>& bridge,
                  const CMatrix* truth) {
  cfg.validate();
  if (!prox || !den) throw InvalidArgument("prox and denoiser must be set");
  if (!z0.allFinite()) throw NumericError("initial point is not finite");

  PnpResult out;
  CMatrix z = z0;
  double best = std::numeric_limits<double>::infinity();
  if (cfg.return_best && truth != nullptr) {
    best = nmse_ratio(z, *truth);
    out.estimate = z;
  }

  for (int t = 1; t <= cfg.n_iters; ++t) {
    const double rho = cfg.rho(t);
    const double sigma2 = sigma_schedule(cfg, t);
    const CMatrix x = prox(z, rho);
    if (!x.allFinite())
      throw NumericError("prox produced a non-finite iterate at iteration " +
                         std::to_string(t));
    CMatrix znew = bridge ? bridge->from_denoiser(den(bridge->to_denoiser(x), sigma2))
                          : den(x, sigma2);
    if (znew.rows() != z.rows() || znew.cols() != z.cols())
      throw DimensionError("denoiser changed the iterate shape at iteration " +
                           std::to_string(t));
    if (!znew.allFinite())
      throw NumericError("denoiser produced a non-finite iterate at iteration " +
                         std::to_string(t));

    TraceEntry e;
    e.iter = t;
    e.rho = rho;
    e.sigma2 = sigma2;
    e.residual = (znew - z).norm();
    e.nmse_db = std::numeric_limits<double>::quiet_NaN();
    z = std::move(znew);
    if (truth != nullptr) {
      const double ratio = nmse_ratio(z, *truth);
      e.nmse_db = ratio_to_db(ratio);
      if (cfg.return_best && ratio < best) {
        best = ratio;
        out.estimate = z;
        out.returned_iter = t;
      }
    }
    out.trace.entries.push_back(e);
  }
  if (!(cfg.return_best && truth != nullptr)) {
    out.estimate = std::move(z);
    out.returned_iter = cfg.n_iters;
  }
  return out;
}

}  // namespace pnpcsi
