#pragma once

// Half-quadratic-splitting plug-and-play iteration:
//   x = prox(z, rho_t); z = den(x, lambda / (2 rho_t)); rho_{t+1} = alpha rho_t

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pnpcsi/common.hpp"

namespace pnpcsi {

struct SolverConfig {
  double lambda = 0.5;
  double rho0 = 0.1;
  double alpha = 1.5;
  int n_iters = 10;
  // Return the iterate with the lowest NMSE against the supplied truth
  // instead of the last one. Diagnostic only.
  bool return_best = false;

  double rho(int t) const;  // rho0 * alpha^(t-1), t >= 1
  void validate() const;
};

// lambda / (2 rho0 alpha^(t-1)). Throws InvalidArgument for t < 1.
double sigma_schedule(const SolverConfig& cfg, int t);

// Minimizer of data-fidelity + rho ||z - x||^2 in the task's native domain.
using ProxStep = std::function<CMatrix(const CMatrix& z, double rho)>;
// Denoiser acting on the signal it is handed (after the bridge, if any).
using DenoiseFn = std::function<CMatrix(const CMatrix& x, double sigma2)>;

// Maps native-domain iterates into the denoiser's domain and back.
struct DomainBridge {
  std::function<CMatrix(const CMatrix&)> to_denoiser;
  std::function<CMatrix(const CMatrix&)> from_denoiser;
};

struct TraceEntry {
  int iter = 0;
  double rho = 0.0;
  double sigma2 = 0.0;
  double residual = 0.0;  // ||z^{t+1} - z^t||_F
  double nmse_db = 0.0;   // NaN without ground truth
};

struct IterationTrace {
  std::vector<TraceEntry> entries;

  // Header: iter,rho,sigma2,residual,nmse_db
  void write_csv(std::ostream& os) const;
};

struct PnpResult {
  CMatrix estimate;
  IterationTrace trace;
  int returned_iter = 0;  // 0 means the initial point
};

// Runs cfg.n_iters iterations from z0. `truth` (native domain) enables the
// NMSE column. Throws NumericError naming the iteration if an iterate
// becomes non-finite.
PnpResult run_pnp(const ProxStep& prox, const DenoiseFn& den, const CMatrix& z0,
                  const SolverConfig& cfg,
                  const std::optional<DomainBridge>& bridge = std::nullopt,
                  const CMatrix* truth = nullptr);

}  // namespace pnpcsi
