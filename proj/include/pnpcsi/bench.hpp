#pragma once

// Experiment orchestration: runs a task over the test split for every
// (SNR, CR, bits) cell and aggregates ResultRows.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pnpcsi/channel_model.hpp"
#include "pnpcsi/denoiser.hpp"
#include "pnpcsi/hqs_solver.hpp"
#include "pnpcsi/io.hpp"

namespace pnpcsi {

enum class Task { kCe, kAe, kCf };

Task parse_task(const std::string& name);
std::string task_name(Task t);

struct ExperimentConfig {
  Task task = Task::kCe;
  // "cnn:<weights path>", "shrink", "oracle" or "identity".
  std::string denoiser = "shrink";
  double shrink_kappa = 1.5;
  // CE: A-D or a pattern file; AE: A, B or an index file.
  std::string pattern = "A";
  std::vector<double> snrs_db = {10.0};        // CE, AE
  std::vector<double> crs = {0.25};            // CF
  std::vector<std::optional<int>> bits = {std::nullopt};  // CF
  SolverConfig solver;
  std::uint64_t seed = 1;
  int max_samples = 0;         // 0 = whole test split
  bool with_baselines = true;  // LS/LMMSE, spline, adjoint rows
  bool record_runtime = true;  // false writes runtime_ms = 0
  std::string trace_dir;       // per-cell mean traces when non-empty
  int trace_samples = 0;       // additional per-sample traces per cell

  void validate() const;
};

// Fills an ExperimentConfig from key=value entries (task, denoiser, pattern,
// snr_db, cr, bits, lambda, rho0, alpha, iters, return_best, seed,
// max_samples, baselines, record_runtime, trace_dir, trace_samples).
ExperimentConfig experiment_from_config(const KeyValueConfig& kv);

struct ResultRow {
  std::string task;
  std::string method;
  double snr_db = 0.0;
  double cr = 0.0;              // 0 when not applicable
  std::optional<int> bits;
  double nmse_db = 0.0;
  double cos = 0.0;
  double runtime_ms = 0.0;      // mean per sample
  int iters = 0;
  int excluded_rows = 0;        // CoS rows skipped for near-zero norm
};

struct CellTraces {
  std::string method;
  double snr_db = 0.0;
  double cr = 0.0;
  std::optional<int> bits;
  std::vector<IterationTrace> per_sample;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<CellTraces> traces;  // one per PnP cell
  std::string weights_sha256;      // empty unless a CNN denoiser was used
};

// Throws with the sample index and cell in the message if a module fails.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds);

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows);

// Mean-of-ratio NMSE per iteration across samples; other columns are means.
IterationTrace mean_trace(const std::vector<IterationTrace>& traces);

// Fraction of samples whose NMSE at iteration `later` is below `earlier`.
double fraction_improved(const std::vector<IterationTrace>& traces, int earlier,
                         int later);

}  // namespace pnpcsi
