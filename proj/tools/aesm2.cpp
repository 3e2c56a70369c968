// Command-line harness: data generation, training, evaluation and analysis
// driven by a single JSON config with flag overrides.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "aesm2/config.hpp"
#include "aesm2/evaluation.hpp"
#include "aesm2/kernels.hpp"
#include "aesm2/model.hpp"
#include "aesm2/train.hpp"

namespace fs = std::filesystem;
using namespace aesm2;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out;
  std::string model;
  std::string kernels;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool no_aux = false;
  bool no_noise = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON run config");
  cmd->add_option("--out", o.out, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "run seed (overrides config)")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--model", o.model,
                  "model kind: aesm2 | mmoe | hard_sharing | static_split");
  cmd->add_flag("--no-aux", o.no_aux, "disable the auxiliary selection losses");
  cmd->add_flag("--no-noise", o.no_noise, "disable gate exploration noise");
  cmd->add_option("--kernels", o.kernels, "force kernel lane: scalar | avx2 | auto");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg = load_run_config(o.config_path);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.model.empty()) cfg.model_kind = parse_model_kind(o.model);
  if (o.no_aux) cfg.aux = false;
  if (o.no_noise) cfg.noise = false;
  if (!o.kernels.empty() && !kernels::select(o.kernels))
    throw ConfigError("kernel lane '" + o.kernels + "' is unavailable");
  return cfg;
}

template <class Fn>
void write_file_atomic(const fs::path& path, Fn&& fn) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    fn(os);
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void print_dataset_stats(const Dataset& ds) {
  const int s = ds.schema.scenario_count();
  std::vector<long> count(static_cast<std::size_t>(s), 0), clicks(static_cast<std::size_t>(s), 0),
      convs(static_cast<std::size_t>(s), 0);
  for (const auto& inst : ds.instances) {
    const int idx = scenario_index(ds.schema, inst);
    ++count[static_cast<std::size_t>(idx)];
    clicks[static_cast<std::size_t>(idx)] += inst.click;
    convs[static_cast<std::size_t>(idx)] += inst.conversion;
  }
  std::printf("%-14s %10s %8s %10s %10s\n", "scenario", "n", "share", "ctr",
              "cvr|click");
  for (int i = 0; i < s; ++i) {
    const double n = static_cast<double>(count[static_cast<std::size_t>(i)]);
    std::printf("%-14s %10ld %7.2f%% %9.4f %10.4f\n",
                scenario_label(ds.schema, i).c_str(), count[static_cast<std::size_t>(i)],
                100.0 * n / static_cast<double>(ds.size()),
                n > 0 ? clicks[static_cast<std::size_t>(i)] / n : 0.0,
                clicks[static_cast<std::size_t>(i)] > 0
                    ? static_cast<double>(convs[static_cast<std::size_t>(i)]) /
                          static_cast<double>(clicks[static_cast<std::size_t>(i)])
                    : 0.0);
  }
}

int cmd_gen_data(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  if (cfg.data.source != "synthetic")
    throw ConfigError("gen-data requires a synthetic data source");
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  const DataSplits splits = load_data(cfg);

  write_file_atomic(dir / "schema.json",
                    [&](std::ostream& os) { os << cfg.data.synthetic.schema.to_json(); });
  write_file_atomic(dir / "synthetic_spec.json",
                    [&](std::ostream& os) { os << cfg.data.synthetic.to_json(); });
  for (const auto& [name, ds] :
       {std::pair<const char*, const Dataset*>{"train.csv", &splits.train},
        {"val.csv", &splits.val},
        {"test.csv", &splits.test}}) {
    const fs::path tmp = dir / (std::string(name) + ".tmp");
    write_csv(tmp.string(), *ds);
    fs::rename(tmp, dir / name);
  }
  std::printf("wrote %s/{train,val,test}.csv (%d/%d/%d instances)\n",
              dir.string().c_str(), splits.train.size(), splits.val.size(),
              splits.test.size());
  print_dataset_stats(splits.train);
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json",
                    [&](std::ostream& os) { os << run_config_to_json(cfg); });

  const DataSplits splits = load_data(cfg);
  auto model = make_model(cfg.model_kind, cfg.effective_model_config(),
                          splits.train.schema, derive_seed(cfg.seed, "model-init"));

  TrainSettings settings = cfg.train;
  settings.weights = cfg.effective_loss_weights();

  std::ofstream step_log(dir / "steps.log.tmp");
  std::ofstream sel_log(dir / "selection.jsonl.tmp");
  std::printf("training %s (seed %llu) on %d instances...\n",
              to_string(cfg.model_kind).c_str(),
              static_cast<unsigned long long>(cfg.seed), splits.train.size());
  const TrainResult result = train_model(*model, splits.train, splits.val,
                                         settings, cfg.seed, &step_log, &sel_log);
  step_log.close();
  sel_log.close();
  fs::rename(dir / "steps.log.tmp", dir / "steps.log");
  fs::rename(dir / "selection.jsonl.tmp", dir / "selection.jsonl");

  write_file_atomic(dir / "metrics.csv", [&](std::ostream& os) {
    os << "epoch,val_auc_ctr,val_auc_ctcvr,improved\n";
    os.precision(12);
    for (const auto& e : result.epochs)
      os << e.epoch << ',' << e.val_auc_ctr << ',' << e.val_auc_ctcvr << ','
         << (e.improved ? 1 : 0) << '\n';
  });
  save_checkpoint(*model, (dir / "checkpoint.json").string());

  const MetricReport test_report = evaluate(*model, splits.test);
  write_file_atomic(dir / "test_report.txt", [&](std::ostream& os) {
    write_metric_report_kv(os, test_report);
  });
  std::printf("best epoch %d, val CTR AUC %.4f; test CTR AUC %.4f, CTCVR AUC %.4f\n",
              result.best_epoch, result.best_val_auc_ctr,
              test_report.find(-1, "ctr").value_or(0.0),
              test_report.find(-1, "ctcvr").value_or(0.0));
  return 0;
}

Dataset filter_scenario(const Dataset& ds, int scenario) {
  Dataset out;
  out.schema = ds.schema;
  for (const auto& inst : ds.instances)
    if (scenario_index(ds.schema, inst) == scenario) out.instances.push_back(inst);
  return out;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint,
             bool transfer) {
  RunConfig cfg = resolve_config(opts);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  const DataSplits splits = load_data(cfg);

  if (transfer) {
    // Per-scenario multi-task (ESMM-style shared bottom) models, trained on
    // one scenario each and scored on every scenario.
    const int s = splits.train.schema.scenario_count();
    std::vector<std::unique_ptr<Model>> models;
    std::vector<Model*> raw;
    std::vector<Dataset> tests;
    for (int i = 0; i < s; ++i) {
      Dataset tr = filter_scenario(splits.train, i);
      Dataset va = filter_scenario(splits.val, i);
      auto m = make_model(ModelKind::hard_sharing, cfg.effective_model_config(),
                          splits.train.schema,
                          derive_seed(cfg.seed, "transfer-init-" + std::to_string(i)));
      TrainSettings settings = cfg.train;
      settings.weights = cfg.effective_loss_weights();
      std::printf("transfer: training scenario %s on %d instances...\n",
                  scenario_label(splits.train.schema, i).c_str(), tr.size());
      train_model(*m, tr, va, settings, derive_seed(cfg.seed, "transfer-" + std::to_string(i)));
      models.push_back(std::move(m));
      raw.push_back(models.back().get());
      tests.push_back(filter_scenario(splits.test, i));
    }
    const TransferMatrices matrices = transfer_matrix(raw, tests);
    for (const auto& task : splits.train.schema.tasks)
      write_file_atomic(dir / ("transfer_" + task + ".csv"),
                        [&](std::ostream& os) { write_transfer_csv(os, matrices, task); });
    std::printf("wrote %s/transfer_{ctr,ctcvr}.csv\n", dir.string().c_str());
    return 0;
  }

  if (checkpoint.empty())
    throw ConfigError("eval requires --checkpoint (or --transfer)");
  auto model = make_model(cfg.model_kind, cfg.effective_model_config(),
                          splits.train.schema, derive_seed(cfg.seed, "model-init"));
  load_checkpoint(*model, checkpoint);
  const MetricReport report = evaluate(*model, splits.test);
  write_file_atomic(dir / "report.txt",
                    [&](std::ostream& os) { write_metric_report_kv(os, report); });
  write_file_atomic(dir / "report.csv", [&](std::ostream& os) {
    write_metric_table_csv(os, {{to_string(cfg.model_kind), report}});
  });
  write_metric_report_kv(std::cout, report);
  return 0;
}

int cmd_analyze(const std::string& run_dir) {
  const fs::path dir = run_dir;
  if (!fs::exists(dir / "config.json"))
    throw IoError("analyze: missing " + (dir / "config.json").string() +
                  " (run `aesm2 train` first)");
  if (!fs::exists(dir / "steps.log"))
    throw IoError("analyze: missing " + (dir / "steps.log").string());
  if (!fs::exists(dir / "checkpoint.json"))
    throw IoError("analyze: missing " + (dir / "checkpoint.json").string());

  std::ifstream cfg_is(dir / "config.json");
  std::stringstream cfg_ss;
  cfg_ss << cfg_is.rdbuf();
  const RunConfig cfg = run_config_from_json(cfg_ss.str());

  fs::create_directories(dir / "analysis");

  {
    std::ifstream is(dir / "steps.log");
    const KlCurves curves = kl_curves(is);
    write_file_atomic(dir / "analysis" / "kl_curves.csv", [&](std::ostream& os) {
      os << "step,kl_specific,kl_shared\n";
      os.precision(12);
      for (std::size_t i = 0; i < curves.steps.size(); ++i)
        os << curves.steps[i] << ',' << curves.kl_specific[i] << ','
           << curves.kl_shared[i] << '\n';
    });
  }

  const DataSplits splits = load_data(cfg);
  if (splits.test.instances.empty())
    throw DataError("analyze: evaluation set is empty");
  auto model = make_model(cfg.model_kind, cfg.effective_model_config(),
                          splits.test.schema, derive_seed(cfg.seed, "model-init"));
  load_checkpoint(*model, (dir / "checkpoint.json").string());
  const UtilizationReport report = utilization(*model, splits.test);
  write_file_atomic(dir / "analysis" / "utilization.csv",
                    [&](std::ostream& os) { write_utilization_csv(os, report); });
  std::printf("wrote %s/analysis/{kl_curves,utilization}.csv\n",
              dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AESM2 multi-scenario multi-task ranking harness"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, eval_opts;
  std::string eval_checkpoint, analyze_run;
  bool transfer = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic CSV data");
  add_common(gen, gen_opts);
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, train_opts);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate");
  eval->add_flag("--transfer", transfer,
                 "train per-scenario models and emit the transfer matrices");
  CLI::App* analyze =
      app.add_subcommand("analyze", "extract KL curves and expert utilization");
  analyze->add_option("--run", analyze_run, "run directory from `aesm2 train`")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_opts);
    if (train->parsed()) return cmd_train(train_opts);
    if (eval->parsed()) return cmd_eval(eval_opts, eval_checkpoint, transfer);
    if (analyze->parsed()) return cmd_analyze(analyze_run);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
