#pragma once

#include <cstdint>
#include <string>

#include "aesm2/data.hpp"
#include "aesm2/model.hpp"
#include "aesm2/objective.hpp"

namespace aesm2 {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "csv"
  SyntheticSpec synthetic = default_synthetic_spec();
  int n_train = 200000;
  int n_val = 20000;
  int n_test = 20000;
  std::string train_csv, val_csv, test_csv, schema_json;
};

struct TrainSettings {
  int epochs = 20;
  int batch_size = 256;
  AdamConfig adam;
  LossWeights weights;
  int patience = 3;
  int log_every = 20;
};

// One run, fully determined by this record plus the seed. Every field has a
// default; an empty config file trains the default model on default
// synthetic data.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string out_dir = "runs/latest";
  ModelKind model_kind = ModelKind::aesm2;
  ModelConfig model;
  DataConfig data;
  TrainSettings train;
  bool noise = true;  // gate exploration noise (ablation switch)
  bool aux = true;    // auxiliary selection losses (ablation switch)

  // Ablation switches folded in: noise=false zeroes the model's noise scale,
  // aux=false zeroes both aux lambdas.
  ModelConfig effective_model_config() const;
  LossWeights effective_loss_weights() const;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

// Empty path gives the defaults.
RunConfig load_run_config(const std::string& path);

struct DataSplits {
  Dataset train, val, test;
};

// Synthetic: generated from seed-derived streams; CSV: loaded from the
// configured paths.
DataSplits load_data(const RunConfig& cfg);

}  // namespace aesm2
