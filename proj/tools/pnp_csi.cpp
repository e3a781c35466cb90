// pnp-csi: dataset generation, denoiser training and task experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pnpcsi/bench.hpp"
#include "pnpcsi/channel_model.hpp"
#include "pnpcsi/denoiser.hpp"
#include "pnpcsi/io.hpp"

using namespace pnpcsi;

namespace {

KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? KeyValueConfig() : KeyValueConfig::load(path);
}

DatasetConfig dataset_config(const KeyValueConfig& kv) {
  DatasetConfig d;
  auto& c = d.channel;
  c.n_subcarriers = static_cast<int>(kv.get_int("n_subcarriers", c.n_subcarriers));
  c.n_antennas = static_cast<int>(kv.get_int("n_antennas", c.n_antennas));
  c.crop_rows = static_cast<int>(kv.get_int("crop_rows", c.crop_rows));
  c.n_paths = static_cast<int>(kv.get_int("n_paths", c.n_paths));
  c.carrier_hz = kv.get_double("carrier_hz", c.carrier_hz);
  c.bandwidth_hz = kv.get_double("bandwidth_hz", c.bandwidth_hz);
  c.fft_size = static_cast<int>(kv.get_int("fft_size", c.fft_size));
  c.path_decay_db = kv.get_double("path_decay_db", c.path_decay_db);
  c.max_angle = kv.get_double("max_angle", c.max_angle);
  c.delay_offset_taps = kv.get_double("delay_offset_taps", c.delay_offset_taps);
  d.n_train = static_cast<int>(kv.get_int("n_train", d.n_train));
  d.n_val = static_cast<int>(kv.get_int("n_val", d.n_val));
  d.n_test = static_cast<int>(kv.get_int("n_test", d.n_test));
  d.snr_min_db = kv.get_double("snr_min_db", d.snr_min_db);
  d.snr_max_db = kv.get_double("snr_max_db", d.snr_max_db);
  return d;
}

DenoiserArch arch_config(const KeyValueConfig& kv) {
  DenoiserArch a;
  a.unshuffle = static_cast<int>(kv.get_int("unshuffle", a.unshuffle));
  a.width = static_cast<int>(kv.get_int("width", a.width));
  a.mid_layers = static_cast<int>(kv.get_int("mid_layers", a.mid_layers));
  a.kernel = static_cast<int>(kv.get_int("kernel", a.kernel));
  a.normalize_input = kv.get_bool("normalize_input", a.normalize_input);
  return a;
}

TrainConfig train_config(const KeyValueConfig& kv) {
  TrainConfig t;
  t.batch_size = static_cast<int>(kv.get_int("batch_size", t.batch_size));
  t.epochs = static_cast<int>(kv.get_int("epochs", t.epochs));
  t.initial_lr = kv.get_double("initial_lr", t.initial_lr);
  t.lr_floor = kv.get_double("lr_floor", t.lr_floor);
  t.patience_epochs = static_cast<int>(kv.get_int("patience_epochs", t.patience_epochs));
  t.halving_factor = kv.get_double("halving_factor", t.halving_factor);
  t.max_seconds = kv.get_double("max_seconds", t.max_seconds);
  return t;
}

struct TaskFlags {
  std::string config;
  std::string data;
  std::string weights;
  std::string denoiser;
  std::string pattern;
  std::string out;
  std::string trace_dir;
  std::vector<std::string> cr;
  std::vector<std::string> bits;
  std::vector<std::string> snr_db;
  std::optional<int> iters;
  std::optional<std::uint64_t> seed;
  bool return_best = false;
};

void add_task_flags(CLI::App* app, TaskFlags& f, bool cf) {
  app->add_option("--config", f.config, "key = value experiment config");
  app->add_option("--data", f.data, "PNPD dataset")->required();
  app->add_option("--weights", f.weights, "PNPW weights (selects the CNN denoiser)");
  app->add_option("--denoiser", f.denoiser, "cnn:<file> | shrink | oracle | identity");
  app->add_option("--out", f.out, "result CSV (default: stdout)");
  app->add_option("--trace-dir", f.trace_dir, "directory for iteration traces");
  app->add_option("--iters", f.iters, "HQS iterations");
  app->add_option("--seed", f.seed, "experiment seed");
  app->add_flag("--return-best", f.return_best,
                "return the best iterate against ground truth (diagnostic)");
  if (cf) {
    app->add_option("--cr", f.cr, "compression ratios, e.g. 1/4")->delimiter(',');
    app->add_option("--bits", f.bits, "quantizer bits or none")->delimiter(',');
  } else {
    app->add_option("--pattern", f.pattern, "A|B|C|D or a pattern file");
    app->add_option("--snr-db", f.snr_db, "SNR list in dB")->delimiter(',');
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

KeyValueConfig merged(const TaskFlags& f, const std::string& task) {
  KeyValueConfig kv = load_config(f.config);
  kv.set("task", task);
  if (!f.weights.empty()) kv.set("denoiser", "cnn:" + f.weights);
  if (!f.denoiser.empty()) kv.set("denoiser", f.denoiser);
  if (!f.pattern.empty()) kv.set("pattern", f.pattern);
  if (!f.cr.empty()) kv.set("cr", join(f.cr));
  if (!f.bits.empty()) kv.set("bits", join(f.bits));
  if (!f.snr_db.empty()) kv.set("snr_db", join(f.snr_db));
  if (f.iters) kv.set("iters", std::to_string(*f.iters));
  if (f.seed) kv.set("seed", std::to_string(*f.seed));
  if (f.return_best) kv.set("return_best", "true");
  if (!f.trace_dir.empty()) kv.set("trace_dir", f.trace_dir);
  return kv;
}

void emit(const std::vector<ResultRow>& rows, const std::string& out) {
  if (out.empty()) {
    write_results_csv(std::cout, rows);
    return;
  }
  std::ofstream os(out, std::ios::binary);
  if (!os) throw IoError("cannot open '" + out + "' for writing");
  write_results_csv(os, rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plug-and-play CSI reconstruction toolkit"};
  app.require_subcommand(1);

  std::string gd_config, gd_out;
  std::uint64_t gd_seed = 1;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", gd_config, "key = value dataset config");
  gen->add_option("--out", gd_out, "output PNPD file")->required();
  gen->add_option("--seed", gd_seed, "master seed");

  std::string tr_config, tr_data, tr_out, tr_history;
  std::uint64_t tr_seed = 1;
  auto* tr = app.add_subcommand("train", "train the denoiser");
  tr->add_option("--config", tr_config, "key = value training config");
  tr->add_option("--data", tr_data, "PNPD dataset")->required();
  tr->add_option("--out", tr_out, "output PNPW weights")->required();
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--history", tr_history, "per-epoch loss CSV");

  TaskFlags ce, ae, cf, bench;
  add_task_flags(app.add_subcommand("run-ce", "channel estimation"), ce, false);
  add_task_flags(app.add_subcommand("run-ae", "antenna extrapolation"), ae, false);
  add_task_flags(app.add_subcommand("run-cf", "CSI feedback"), cf, true);
  auto* bn = app.add_subcommand("bench", "all three tasks with one config");
  bn->add_option("--config", bench.config, "key = value experiment config");
  bn->add_option("--data", bench.data, "PNPD dataset")->required();
  bn->add_option("--weights", bench.weights, "PNPW weights");
  bn->add_option("--out", bench.out, "result CSV (default: stdout)");
  bn->add_option("--trace-dir", bench.trace_dir, "directory for traces");
  bn->add_option("--seed", bench.seed, "experiment seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = dataset_config(load_config(gd_config));
      write_dataset(gd_out, gen_dataset(cfg, gd_seed));
      std::cerr << "wrote " << cfg.n_train + cfg.n_val + cfg.n_test
                << " samples to " << gd_out << "\n";
    } else if (tr->parsed()) {
      const auto kv = load_config(tr_config);
      TrainConfig tc = train_config(kv);
      tc.seed = tr_seed;
      const Dataset ds = read_dataset(tr_data);
      std::ofstream hist;
      if (!tr_history.empty()) {
        hist.open(tr_history, std::ios::binary);
        CsvWriter(hist).row({"epoch", "train_loss", "val_loss", "lr", "seconds"});
      }
      const auto res = train(ds, arch_config(kv), tc, [&](const EpochStats& s) {
        std::fprintf(stderr, "epoch %d train %.5f val %.5f lr %.2e %.0fs\n",
                     s.epoch, s.train_loss, s.val_loss, s.lr, s.seconds);
        if (hist.is_open())
          CsvWriter(hist).row({std::to_string(s.epoch), format_double(s.train_loss),
                               format_double(s.val_loss), format_double(s.lr),
                               format_double(s.seconds)});
      });
      save_weights(tr_out, res.weights);
      std::cerr << "best epoch " << res.best_epoch << ", "
                << res.weights.parameter_count() << " parameters -> " << tr_out
                << "\n";
    } else if (app.got_subcommand("bench")) {
      const Dataset ds = read_dataset(bench.data);
      std::vector<ResultRow> rows;
      for (const char* task : {"ce", "ae", "cf"}) {
        KeyValueConfig kv = merged(bench, task);
        // Task-specific overrides use a "<task>." prefix in the config.
        for (const auto& [k, v] : KeyValueConfig(kv).entries())
          if (k.rfind(std::string(task) + ".", 0) == 0)
            kv.set(k.substr(std::string(task).size() + 1), v);
        const auto res = run_experiment(experiment_from_config(kv), ds);
        rows.insert(rows.end(), res.rows.begin(), res.rows.end());
      }
      emit(rows, bench.out);
    } else {
      const char* task = app.got_subcommand("run-ce")   ? "ce"
                         : app.got_subcommand("run-ae") ? "ae"
                                                        : "cf";
      const TaskFlags& f = task[0] == 'c' && task[1] == 'e' ? ce
                           : task[0] == 'a'                 ? ae
                                                            : cf;
      const Dataset ds = read_dataset(f.data);
      const auto res = run_experiment(experiment_from_config(merged(f, task)), ds);
      emit(res.rows, f.out);
      if (!res.weights_sha256.empty())
        std::cerr << "weights sha256 " << res.weights_sha256 << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "pnp-csi: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
