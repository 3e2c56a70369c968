#include "aesm2/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aesm2/error.hpp"

namespace aesm2 {

using nlohmann::json;

ModelConfig RunConfig::effective_model_config() const {
  ModelConfig m = model;
  if (!noise) m.noise_scale = 0.0;
  return m;
}

LossWeights RunConfig::effective_loss_weights() const {
  LossWeights w = train.weights;
  if (!aux) {
    w.specific = 0.0;
    w.shared = 0.0;
  }
  return w;
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = text.empty() ? json::object() : json::parse(text);
  RunConfig c;
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("model_kind"))
    c.model_kind = parse_model_kind(j["model_kind"].get<std::string>());
  if (j.contains("model"))
    c.model = model_config_from_json(j["model"].dump());
  if (j.contains("noise")) c.noise = j["noise"].get<bool>();
  if (j.contains("aux")) c.aux = j["aux"].get<bool>();

  if (j.contains("data")) {
    const json& d = j["data"];
    if (d.contains("source")) c.data.source = d["source"].get<std::string>();
    if (c.data.source != "synthetic" && c.data.source != "csv")
      throw ConfigError("data.source must be 'synthetic' or 'csv'");
    if (d.contains("synthetic"))
      c.data.synthetic = SyntheticSpec::from_json(d["synthetic"].dump());
    if (d.contains("n_train")) c.data.n_train = d["n_train"].get<int>();
    if (d.contains("n_val")) c.data.n_val = d["n_val"].get<int>();
    if (d.contains("n_test")) c.data.n_test = d["n_test"].get<int>();
    if (d.contains("train_csv")) c.data.train_csv = d["train_csv"].get<std::string>();
    if (d.contains("val_csv")) c.data.val_csv = d["val_csv"].get<std::string>();
    if (d.contains("test_csv")) c.data.test_csv = d["test_csv"].get<std::string>();
    if (d.contains("schema_json")) c.data.schema_json = d["schema_json"].get<std::string>();
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("epochs")) c.train.epochs = t["epochs"].get<int>();
    if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<int>();
    if (t.contains("lr")) c.train.adam.lr = t["lr"].get<double>();
    if (t.contains("beta1")) c.train.adam.beta1 = t["beta1"].get<double>();
    if (t.contains("beta2")) c.train.adam.beta2 = t["beta2"].get<double>();
    if (t.contains("eps")) c.train.adam.eps = t["eps"].get<double>();
    if (t.contains("lambda_ctr")) c.train.weights.ctr = t["lambda_ctr"].get<double>();
    if (t.contains("lambda_ctcvr")) c.train.weights.ctcvr = t["lambda_ctcvr"].get<double>();
    if (t.contains("lambda_specific"))
      c.train.weights.specific = t["lambda_specific"].get<double>();
    if (t.contains("lambda_shared"))
      c.train.weights.shared = t["lambda_shared"].get<double>();
    if (t.contains("l2")) c.train.weights.l2 = t["l2"].get<double>();
    if (t.contains("patience")) c.train.patience = t["patience"].get<int>();
    if (t.contains("log_every")) c.train.log_every = t["log_every"].get<int>();
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["model_kind"] = to_string(c.model_kind);
  j["model"] = json::parse(model_config_to_json(c.model));
  j["noise"] = c.noise;
  j["aux"] = c.aux;
  j["data"]["source"] = c.data.source;
  j["data"]["synthetic"] = json::parse(c.data.synthetic.to_json());
  j["data"]["n_train"] = c.data.n_train;
  j["data"]["n_val"] = c.data.n_val;
  j["data"]["n_test"] = c.data.n_test;
  j["data"]["train_csv"] = c.data.train_csv;
  j["data"]["val_csv"] = c.data.val_csv;
  j["data"]["test_csv"] = c.data.test_csv;
  j["data"]["schema_json"] = c.data.schema_json;
  j["train"]["epochs"] = c.train.epochs;
  j["train"]["batch_size"] = c.train.batch_size;
  j["train"]["lr"] = c.train.adam.lr;
  j["train"]["beta1"] = c.train.adam.beta1;
  j["train"]["beta2"] = c.train.adam.beta2;
  j["train"]["eps"] = c.train.adam.eps;
  j["train"]["lambda_ctr"] = c.train.weights.ctr;
  j["train"]["lambda_ctcvr"] = c.train.weights.ctcvr;
  j["train"]["lambda_specific"] = c.train.weights.specific;
  j["train"]["lambda_shared"] = c.train.weights.shared;
  j["train"]["l2"] = c.train.weights.l2;
  j["train"]["patience"] = c.train.patience;
  j["train"]["log_every"] = c.train.log_every;
  return j.dump(2);
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return run_config_from_json(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

DataSplits load_data(const RunConfig& cfg) {
  DataSplits out;
  if (cfg.data.source == "synthetic") {
    out.train = generate_synthetic(cfg.data.synthetic, cfg.data.n_train,
                                   derive_seed(cfg.seed, "train-data"));
    out.val = generate_synthetic(cfg.data.synthetic, cfg.data.n_val,
                                 derive_seed(cfg.seed, "val-data"));
    out.test = generate_synthetic(cfg.data.synthetic, cfg.data.n_test,
                                  derive_seed(cfg.seed, "test-data"));
    return out;
  }
  if (cfg.data.schema_json.empty())
    throw ConfigError("csv data source requires data.schema_json");
  std::ifstream is(cfg.data.schema_json);
  if (!is) throw IoError("cannot open schema '" + cfg.data.schema_json + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  const DatasetSchema schema = DatasetSchema::from_json(ss.str());
  out.train = load_csv(cfg.data.train_csv, schema);
  out.val = load_csv(cfg.data.val_csv, schema);
  out.test = load_csv(cfg.data.test_csv, schema);
  return out;
}

}  // namespace aesm2
