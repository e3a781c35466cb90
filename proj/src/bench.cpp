#include "pnpcsi/bench.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>

#include "pnpcsi/baselines.hpp"
#include "pnpcsi/metrics.hpp"
#include "pnpcsi/tasks.hpp"

namespace pnpcsi {

Task parse_task(const std::string& name) {
  if (name == "ce") return Task::kCe;
  if (name == "ae") return Task::kAe;
  if (name == "cf") return Task::kCf;
  throw InvalidArgument("unknown task '" + name + "' (expected ce, ae or cf)");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::kCe: return "ce";
    case Task::kAe: return "ae";
    case Task::kCf: return "cf";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  solver.validate();
  if (task != Task::kCf && snrs_db.empty())
    throw InvalidArgument("SNR list is empty");
  if (task == Task::kCf && (crs.empty() || bits.empty()))
    throw InvalidArgument("CR and bits lists must be non-empty");
  if (max_samples < 0) throw InvalidArgument("max_samples must be >= 0");
  if (trace_samples < 0) throw InvalidArgument("trace_samples must be >= 0");
  const bool known = denoiser == "shrink" || denoiser == "oracle" ||
                     denoiser == "identity" || denoiser.rfind("cnn:", 0) == 0;
  if (!known) throw InvalidArgument("unknown denoiser '" + denoiser + "'");
  if (denoiser.rfind("cnn:", 0) == 0 &&
      !std::filesystem::exists(denoiser.substr(4)))
    throw IoError("weights file '" + denoiser.substr(4) + "' does not exist");
}

ExperimentConfig experiment_from_config(const KeyValueConfig& kv) {
  ExperimentConfig c;
  if (const auto t = kv.get("task")) c.task = parse_task(*t);
  c.denoiser = kv.get_string("denoiser", c.denoiser);
  c.shrink_kappa = kv.get_double("shrink_kappa", c.shrink_kappa);
  c.pattern = kv.get_string("pattern", c.pattern);
  c.snrs_db = kv.get_doubles("snr_db", c.snrs_db);
  c.crs = kv.get_doubles("cr", c.crs);
  if (const auto b = kv.get("bits")) {
    c.bits.clear();
    std::string item;
    std::string text = *b + ",";
    std::size_t start = 0;
    for (std::size_t pos; (pos = text.find(',', start)) != std::string::npos;
         start = pos + 1) {
      item = text.substr(start, pos - start);
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (item.empty()) continue;
      if (item == "none") c.bits.push_back(std::nullopt);
      else c.bits.push_back(static_cast<int>(parse_number(item)));
    }
  }
  c.solver.lambda = kv.get_double("lambda", c.solver.lambda);
  c.solver.rho0 = kv.get_double("rho0", c.solver.rho0);
  c.solver.alpha = kv.get_double("alpha", c.solver.alpha);
  c.solver.n_iters = static_cast<int>(kv.get_int("iters", c.solver.n_iters));
  c.solver.return_best = kv.get_bool("return_best", c.solver.return_best);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.max_samples = static_cast<int>(kv.get_int("max_samples", c.max_samples));
  c.with_baselines = kv.get_bool("baselines", c.with_baselines);
  c.record_runtime = kv.get_bool("record_runtime", c.record_runtime);
  c.trace_dir = kv.get_string("trace_dir", c.trace_dir);
  c.trace_samples = static_cast<int>(kv.get_int("trace_samples", c.trace_samples));
  return c;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool is_preset(const std::string& s, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (s == n) return true;
  return false;
}

// Accumulates one (method, cell) row.
struct Accumulator {
  ResultRow row;
  double ratio_sum = 0.0;
  double cos_sum = 0.0;
  double ms_sum = 0.0;
  int n = 0;

  void add(const CMatrix& est, const CMatrix& ref, const CMatrix& est_rows,
           const CMatrix& ref_rows, double ms) {
    ratio_sum += nmse_ratio(est, ref);
    const CosResult c = cos_similarity(est_rows, ref_rows);
    cos_sum += c.value;
    row.excluded_rows += c.excluded_rows;
    ms_sum += ms;
    ++n;
  }

  ResultRow finish(bool record_runtime) const {
    ResultRow r = row;
    r.nmse_db = ratio_to_db(ratio_sum / n);
    r.cos = cos_sum / n;
    r.runtime_ms = record_runtime ? ms_sum / n : 0.0;
    return r;
  }
};

std::string cell_tag(const std::string& task, const std::string& method,
                     double snr, double cr, std::optional<int> bits) {
  std::string s = task + "_" + method;
  if (std::isfinite(snr)) s += "_snr" + format_double(snr);
  if (cr > 0) s += "_cr" + format_double(cr);
  if (bits) s += "_b" + std::to_string(*bits);
  return s;
}

class DenoiserSource {
 public:
  explicit DenoiserSource(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (cfg.denoiser.rfind("cnn:", 0) == 0) {
      const std::string path = cfg.denoiser.substr(4);
      cnn_ = std::make_unique<Denoiser>(load_weights(path));
      sha256_ = sha256_file(path);
    }
  }

  std::string method() const {
    if (cnn_) return "pnp-cnn";
    return "pnp-" + cfg_.denoiser;
  }

  // `truth_ad` is the denoiser-domain ground truth of the current sample.
  DenoiseFn make(const CMatrix& truth_ad) const {
    if (cnn_) return cnn_denoiser(*cnn_);
    if (cfg_.denoiser == "shrink") return shrink_denoiser(cfg_.shrink_kappa);
    if (cfg_.denoiser == "oracle") return oracle_denoiser(truth_ad);
    return identity_denoiser();
  }

  const std::string& sha256() const { return sha256_; }

 private:
  const ExperimentConfig& cfg_;
  std::unique_ptr<Denoiser> cnn_;
  std::string sha256_;
};

void emit_traces(const ExperimentConfig& cfg, const CellTraces& cell,
                 const std::string& task) {
  if (cfg.trace_dir.empty()) return;
  std::filesystem::create_directories(cfg.trace_dir);
  const std::string tag =
      cell_tag(task, cell.method, cell.snr_db, cell.cr, cell.bits);
  {
    std::ofstream os(cfg.trace_dir + "/" + tag + "_mean.csv", std::ios::binary);
    if (!os) throw IoError("cannot write traces into '" + cfg.trace_dir + "'");
    mean_trace(cell.per_sample).write_csv(os);
  }
  const int k = std::min<int>(cfg.trace_samples,
                              static_cast<int>(cell.per_sample.size()));
  for (int i = 0; i < k; ++i) {
    std::ofstream os(cfg.trace_dir + "/" + tag + "_s" + std::to_string(i) +
                         ".csv",
                     std::ios::binary);
    cell.per_sample[i].write_csv(os);
  }
}

template <typename Fn>
void with_context(const std::string& ctx, Fn&& fn) {
  try {
    fn();
  } catch (const DimensionError& e) {
    throw DimensionError(ctx + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(ctx + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(ctx + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(ctx + ": " + e.what());
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds) {
  cfg.validate();
  if (ds.test.empty()) throw InvalidArgument("dataset has no test samples");
  const int n = cfg.max_samples > 0
                    ? std::min<int>(cfg.max_samples, static_cast<int>(ds.test.size()))
                    : static_cast<int>(ds.test.size());
  const DftPlan plan(ds.n_subcarriers, ds.n_antennas, ds.crop_rows);
  const DenoiserSource den(cfg);
  const std::string task = task_name(cfg.task);
  const double noiseless = std::numeric_limits<double>::infinity();

  ExperimentResult out;
  out.weights_sha256 = den.sha256();

  auto base_row = [&](const std::string& method, double snr, double cr,
                      std::optional<int> bits, int iters) {
    Accumulator a;
    a.row.task = task;
    a.row.method = method;
    a.row.snr_db = snr;
    a.row.cr = cr;
    a.row.bits = bits;
    a.row.iters = iters;
    return a;
  };

  std::vector<ChannelMatrix> train_h;
  for (const auto& s : ds.train) train_h.push_back(s.clean);

  if (cfg.task == Task::kCe) {
    const PilotPattern pattern =
        is_preset(cfg.pattern, {"A", "B", "C", "D"})
            ? PilotPattern::preset(cfg.pattern, ds.n_subcarriers, ds.n_antennas)
            : PilotPattern::from_file(cfg.pattern, ds.n_subcarriers,
                                      ds.n_antennas);
    for (std::size_t si = 0; si < cfg.snrs_db.size(); ++si) {
      const double snr = cfg.snrs_db[si];
      const std::uint64_t cell_seed = derive_seed(cfg.seed, si);
      Accumulator ls = base_row("ls", snr, 0.0, std::nullopt, 0);
      Accumulator lmmse = base_row("lmmse", snr, 0.0, std::nullopt, 0);
      Accumulator pnp = base_row(den.method(), snr, 0.0, std::nullopt,
                                 cfg.solver.n_iters);
      CellTraces cell{pnp.row.method, snr, 0.0, std::nullopt, {}};
      std::vector<LmmseFilter> filters;
      const bool do_lmmse = cfg.with_baselines && !train_h.empty();
      if (do_lmmse) {
        // Pilot noise variance for a unit-power channel at this SNR.
        const double s2 = std::isfinite(snr) ? std::pow(10.0, -snr / 10.0) : 0.0;
        with_context("fitting LMMSE at snr " + format_double(snr), [&] {
          filters = fit_lmmse_all(train_h, pattern, std::max(s2, 1e-10));
        });
      }
      for (int i = 0; i < n; ++i) {
        const Sample& s = ds.test[i];
        with_context("ce sample " + std::to_string(i) + " snr " +
                         format_double(snr),
                     [&] {
          const auto obs = observe_pilots(s.clean, pattern, snr,
                                          derive_seed(cell_seed, i));
          if (cfg.with_baselines) {
            auto t0 = Clock::now();
            const ChannelMatrix e = ls_estimate(obs, pattern);
            ls.add(e.values, s.clean.values, e.values, s.clean.values,
                   ms_since(t0));
          }
          if (do_lmmse) {
            auto t0 = Clock::now();
            const ChannelMatrix e = lmmse_estimate(obs, pattern, filters);
            lmmse.add(e.values, s.clean.values, e.values, s.clean.values,
                      ms_since(t0));
          }
          auto t0 = Clock::now();
          const auto r = pppce(obs, pattern, plan, den.make(s.clean_ad.values),
                               cfg.solver, &s.clean.values);
          pnp.add(r.estimate, s.clean.values, r.estimate, s.clean.values,
                  ms_since(t0));
          cell.per_sample.push_back(r.trace);
        });
      }
      if (cfg.with_baselines) out.rows.push_back(ls.finish(cfg.record_runtime));
      if (do_lmmse) out.rows.push_back(lmmse.finish(cfg.record_runtime));
      out.rows.push_back(pnp.finish(cfg.record_runtime));
      emit_traces(cfg, cell, task);
      out.traces.push_back(std::move(cell));
    }
  } else if (cfg.task == Task::kAe) {
    const AntennaSelection sel =
        is_preset(cfg.pattern, {"A", "B"})
            ? AntennaSelection::preset(cfg.pattern, ds.n_antennas)
            : AntennaSelection::from_file(cfg.pattern, ds.n_antennas);
    for (std::size_t si = 0; si < cfg.snrs_db.size(); ++si) {
      const double snr = cfg.snrs_db[si];
      const std::uint64_t cell_seed = derive_seed(cfg.seed, si);
      Accumulator spline = base_row("spline", snr, 0.0, std::nullopt, 0);
      Accumulator pnp = base_row(den.method(), snr, 0.0, std::nullopt,
                                 cfg.solver.n_iters);
      CellTraces cell{pnp.row.method, snr, 0.0, std::nullopt, {}};
      for (int i = 0; i < n; ++i) {
        const Sample& s = ds.test[i];
        with_context("ae sample " + std::to_string(i) + " snr " +
                         format_double(snr),
                     [&] {
          const CMatrix obs =
              observe_antennas(s.clean, sel, snr, derive_seed(cell_seed, i));
          if (cfg.with_baselines) {
            auto t0 = Clock::now();
            const ChannelMatrix e = spline_extrapolate(obs, sel);
            spline.add(e.values, s.clean.values, e.values, s.clean.values,
                       ms_since(t0));
          }
          auto t0 = Clock::now();
          const auto r = pppae(obs, sel, plan, den.make(s.clean_ad.values),
                               cfg.solver, &s.clean.values);
          pnp.add(r.estimate, s.clean.values, r.estimate, s.clean.values,
                  ms_since(t0));
          cell.per_sample.push_back(r.trace);
        });
      }
      if (cfg.with_baselines) out.rows.push_back(spline.finish(cfg.record_runtime));
      out.rows.push_back(pnp.finish(cfg.record_runtime));
      emit_traces(cfg, cell, task);
      out.traces.push_back(std::move(cell));
    }
  } else {
    const int rows = ds.crop_rows;
    const int cols = ds.n_antennas;
    const int big_n = 2 * rows * cols;
    for (double cr : cfg.crs) {
      const int m = compressed_length(cr, big_n);
      const Projection proj =
          make_projection(m, big_n, derive_seed(cfg.seed, 1000 + m));
      for (const auto& bits : cfg.bits) {
        Accumulator adj = base_row("adjoint", noiseless, cr, bits, 0);
        Accumulator pnp =
            base_row(den.method(), noiseless, cr, bits, cfg.solver.n_iters);
        CellTraces cell{pnp.row.method, noiseless, cr, bits, {}};
        for (int i = 0; i < n; ++i) {
          const Sample& s = ds.test[i];
          with_context("cf sample " + std::to_string(i) + " cr " +
                           format_double(cr),
                       [&] {
            const CMatrix& truth = s.clean_ad.values;
            const CMatrix truth_sf = plan.ad2sf(s.clean_ad).values;
            const FeedbackCode code = compress(vectorize(truth), proj.a, bits);
            if (cfg.with_baselines) {
              auto t0 = Clock::now();
              const CMatrix e =
                  devectorize(proj.a.transpose() * code.y, rows, cols);
              const double ms = ms_since(t0);
              adj.add(e, truth, plan.ad2sf(AngularCsi(e)).values, truth_sf, ms);
            }
            auto t0 = Clock::now();
            const auto r = pppcf(code, proj, rows, cols, den.make(truth),
                                 cfg.solver, &truth);
            const double ms = ms_since(t0);
            pnp.add(r.estimate, truth,
                    plan.ad2sf(AngularCsi(r.estimate)).values, truth_sf, ms);
            cell.per_sample.push_back(r.trace);
          });
        }
        if (cfg.with_baselines) out.rows.push_back(adj.finish(cfg.record_runtime));
        out.rows.push_back(pnp.finish(cfg.record_runtime));
        emit_traces(cfg, cell, task);
        out.traces.push_back(std::move(cell));
      }
    }
  }
  return out;
}

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  CsvWriter csv(os);
  csv.row({"task", "method", "snr_db", "cr", "bits", "nmse_db", "cos",
           "runtime_ms", "iters", "cos_excluded_rows"});
  for (const auto& r : rows)
    csv.row({r.task, r.method, format_double(r.snr_db), format_double(r.cr),
             r.bits ? std::to_string(*r.bits) : "none", format_double(r.nmse_db),
             format_double(r.cos), format_double(r.runtime_ms),
             std::to_string(r.iters), std::to_string(r.excluded_rows)});
}

IterationTrace mean_trace(const std::vector<IterationTrace>& traces) {
  IterationTrace out;
  if (traces.empty()) return out;
  const std::size_t len = traces.front().entries.size();
  for (std::size_t t = 0; t < len; ++t) {
    TraceEntry e = traces.front().entries[t];
    double res = 0.0, ratio = 0.0;
    for (const auto& tr : traces) {
      if (tr.entries.size() != len)
        throw DimensionError("traces have different lengths");
      res += tr.entries[t].residual;
      ratio += std::pow(10.0, tr.entries[t].nmse_db / 10.0);
    }
    e.residual = res / traces.size();
    e.nmse_db = ratio_to_db(ratio / traces.size());
    out.entries.push_back(e);
  }
  return out;
}

double fraction_improved(const std::vector<IterationTrace>& traces, int earlier,
                         int later) {
  if (traces.empty()) throw InvalidArgument("no traces");
  int better = 0;
  for (const auto& tr : traces) {
    if (earlier < 1 || later < 1 ||
        static_cast<std::size_t>(std::max(earlier, later)) > tr.entries.size())
      throw InvalidArgument("iteration index outside the trace");
    if (tr.entries[later - 1].nmse_db < tr.entries[earlier - 1].nmse_db) ++better;
  }
  return static_cast<double>(better) / traces.size();
}

}  // namespace pnpcsi
