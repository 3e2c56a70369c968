#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "aesm2/config.hpp"
#include "aesm2/evaluation.hpp"
#include "aesm2/train.hpp"
#include "test_util.hpp"

using namespace aesm2;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.model = testutil::tiny_model_config();
  cfg.data.synthetic = testutil::tiny_spec();
  cfg.data.n_train = 6000;
  cfg.data.n_val = 1500;
  cfg.data.n_test = 1500;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 128;
  cfg.train.log_every = 5;
  return cfg;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("run config defaults and round trip") {
  const RunConfig defaults = run_config_from_json("");
  CHECK(defaults.seed == 42);
  CHECK(defaults.model_kind == ModelKind::aesm2);
  CHECK(defaults.data.source == "synthetic");
  CHECK(defaults.train.weights.specific == 0.1);

  RunConfig cfg = tiny_run_config();
  cfg.seed = 1234;
  cfg.aux = false;
  const RunConfig back = run_config_from_json(run_config_to_json(cfg));
  CHECK(back.seed == 1234);
  CHECK(back.aux == false);
  CHECK(back.data.n_train == 6000);
  CHECK(back.model.expert_dim == cfg.model.expert_dim);
  CHECK(back.effective_loss_weights().specific == 0.0);
  CHECK(back.effective_loss_weights().ctr == 1.0);

  SUBCASE("empty json object trains the default configuration") {
    const RunConfig empty = run_config_from_json("{}");
    CHECK(empty.seed == defaults.seed);
    CHECK(empty.train.epochs == defaults.train.epochs);
  }
  SUBCASE("bad model kind is a config error") {
    CHECK_THROWS_AS(run_config_from_json(R"({"model_kind":"gbm"})"), ConfigError);
  }
}

TEST_CASE("training runs, logs, and improves the loss") {
  const RunConfig cfg = tiny_run_config();
  const DataSplits splits = load_data(cfg);
  auto model = make_model(cfg.model_kind, cfg.effective_model_config(),
                          splits.train.schema, derive_seed(cfg.seed, "model-init"));
  std::ostringstream step_log, sel_log;
  const TrainResult result = train_model(*model, splits.train, splits.val,
                                         cfg.train, cfg.seed, &step_log, &sel_log);
  CHECK(result.steps > 0);
  CHECK(result.best_epoch >= 0);
  CHECK(result.best_val_auc_ctr > 0.5);

  // The step log parses back and losses trend down.
  std::istringstream is(step_log.str());
  const KlCurves curves = kl_curves(is);
  CHECK(curves.steps.size() >= 10);

  std::istringstream is2(step_log.str());
  std::string line, header;
  std::getline(is2, header);
  double first_total = -1.0, last_total = -1.0;
  while (std::getline(is2, line)) {
    const auto pos = line.rfind(',');
    const double total = std::stod(line.substr(pos + 1));
    if (first_total < 0.0) first_total = total;
    last_total = total;
  }
  CHECK(last_total < first_total);

  // Selection traces were emitted.
  CHECK(sel_log.str().find("\"specific\"") != std::string::npos);
}

TEST_CASE("fixed seed reproduces training bit for bit") {
  const RunConfig cfg = tiny_run_config();
  auto run_once = [&]() {
    const DataSplits splits = load_data(cfg);
    auto model = make_model(cfg.model_kind, cfg.effective_model_config(),
                            splits.train.schema, derive_seed(cfg.seed, "model-init"));
    const TrainResult result =
        train_model(*model, splits.train, splits.val, cfg.train, cfg.seed);
    std::vector<double> flat;
    for (const auto& p : model->params())
      flat.insert(flat.end(), p.tensor.values().begin(), p.tensor.values().end());
    return std::make_pair(result, flat);
  };
  const auto [r1, p1] = run_once();
  const auto [r2, p2] = run_once();
  CHECK(p1 == p2);
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
    CHECK(r1.epochs[i].val_auc_ctr == r2.epochs[i].val_auc_ctr);
    CHECK(r1.epochs[i].val_auc_ctcvr == r2.epochs[i].val_auc_ctcvr);
  }
}

TEST_CASE("checkpoint file round trip preserves evaluation exactly") {
  const RunConfig cfg = tiny_run_config();
  const DataSplits splits = load_data(cfg);
  auto model = make_model(cfg.model_kind, cfg.effective_model_config(),
                          splits.train.schema, 7);
  TrainSettings settings = cfg.train;
  settings.epochs = 1;
  train_model(*model, splits.train, splits.val, settings, 7);

  const fs::path path = fs::temp_directory_path() / "aesm2_train_ckpt.json";
  save_checkpoint(*model, path.string());
  auto other = make_model(cfg.model_kind, cfg.effective_model_config(),
                          splits.train.schema, 999);
  load_checkpoint(*other, path.string());
  for (std::size_t i = 0; i < model->params().size(); ++i)
    CHECK(other->params()[i].tensor.values() == model->params()[i].tensor.values());

  const Predictions a = predict(*model, splits.test);
  const Predictions b = predict(*other, splits.test);
  CHECK(a.ctr == b.ctr);
  CHECK(a.ctcvr == b.ctcvr);
  fs::remove(path);
}

TEST_CASE("cli end to end") {
#ifdef AESM2_CLI_PATH
  const fs::path dir = fs::temp_directory_path() / "aesm2_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = tiny_run_config();
  cfg.train.epochs = 1;
  cfg.data.n_train = 2000;
  cfg.data.n_val = 500;
  cfg.data.n_test = 500;
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << run_config_to_json(cfg);
  const std::string base = std::string(AESM2_CLI_PATH);

  auto run = [&](const std::string& args) {
    const std::string cmd = base + " " + args + " >> " + (dir / "cli.log").string() + " 2>&1";
    return std::system(cmd.c_str());
  };
  CHECK(run("gen-data --config " + cfg_path.string() + " --out " + (dir / "data").string()) == 0);
  CHECK(fs::exists(dir / "data" / "train.csv"));
  CHECK(fs::exists(dir / "data" / "schema.json"));

  CHECK(run("train --config " + cfg_path.string() + " --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "checkpoint.json"));
  CHECK(fs::exists(dir / "run" / "steps.log"));
  CHECK(fs::exists(dir / "run" / "metrics.csv"));

  CHECK(run("eval --config " + cfg_path.string() + " --out " + (dir / "eval").string() +
            " --checkpoint " + (dir / "run" / "checkpoint.json").string()) == 0);
  CHECK(fs::exists(dir / "eval" / "report.csv"));

  CHECK(run("analyze --run " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "analysis" / "kl_curves.csv"));
  CHECK(fs::exists(dir / "run" / "analysis" / "utilization.csv"));

  // Determinism across reruns: gen-data twice gives byte-identical files.
  CHECK(run("gen-data --config " + cfg_path.string() + " --out " + (dir / "data2").string()) == 0);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir / "data" / "train.csv") == slurp(dir / "data2" / "train.csv"));
  fs::remove_all(dir);
#else
  MESSAGE("AESM2_CLI_PATH not defined; skipping CLI test");
#endif
}

TEST_CASE("divergence raises a diagnostic naming the step") {
  const RunConfig cfg = tiny_run_config();
  const DataSplits splits = load_data(cfg);
  auto model = make_model(cfg.model_kind, cfg.effective_model_config(),
                          splits.train.schema, 5);
  // Poison a parameter table so the first forward pass goes non-finite.
  for (auto& v : model->params()[0].tensor.values())
    v = std::numeric_limits<double>::quiet_NaN();
  TrainSettings settings = cfg.train;
  CHECK_THROWS_WITH_AS(
      train_model(*model, splits.train, splits.val, settings, 5),
      doctest::Contains("step 0"), Error);
}

}  // TEST_SUITE
