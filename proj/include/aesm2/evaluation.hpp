#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aesm2/data.hpp"
#include "aesm2/model.hpp"

namespace aesm2 {

// Mann-Whitney AUC with average ranks over ties: the probability that a
// random positive outranks a random negative, ties counted 1/2. Empty when
// either class is missing (never silently 0.5).
std::optional<double> auc(std::span<const double> scores,
                          std::span<const int> labels);

struct MetricCell {
  int scenario = -1;  // -1 = merged ALL
  std::string scenario_name;
  std::string task;  // "ctr" or "ctcvr"
  std::optional<double> auc;
  int count = 0;
  int positives = 0;
};

struct MetricReport {
  std::vector<MetricCell> cells;
  std::optional<double> find(int scenario, const std::string& task) const;
};

// Raw per-instance scores, labels and scenario ids for one dataset pass
// (noise off, nothing recorded on the tape).
struct Predictions {
  std::vector<double> ctr;
  std::vector<double> ctcvr;
  std::vector<int> click;
  std::vector<int> conversion;
  std::vector<int> scenario;
};

Predictions predict(Model& model, const Dataset& dataset, int batch_size = 512);

// AUC per (scenario, task) cell for CTR (click labels vs the CTR head) and
// CTCVR (conversion labels vs ctr*cvr on the entire space), plus the pooled
// ALL cell per task.
MetricReport evaluate(Model& model, const Dataset& dataset, int batch_size = 512);

void write_metric_report_kv(std::ostream& os, const MetricReport& report);

// Paper-style table: one row per model/variant, columns scenario x task.
void write_metric_table_csv(
    std::ostream& os,
    const std::vector<std::pair<std::string, MetricReport>>& rows);

// transfer[task][i][j] = AUC of the model trained on scenario i, evaluated on
// the scenario-j slice of test_sets[j].
struct TransferMatrices {
  std::vector<std::string> scenario_names;
  std::map<std::string, std::vector<std::vector<std::optional<double>>>> by_task;
};

TransferMatrices transfer_matrix(const std::vector<Model*>& models,
                                 const std::vector<Dataset>& test_sets);

void write_transfer_csv(std::ostream& os, const TransferMatrices& matrices,
                        const std::string& task);

// Frequency of each expert appearing in the specific / shared set, per layer,
// grouped by leaf scenario for scenario layers and by task for task layers.
// Specific frequencies per group sum to k_specific.
struct UtilizationCell {
  int layer = 0;
  bool task_level = false;
  std::string group;
  int expert = 0;
  double specific_freq = 0.0;
  double shared_freq = 0.0;
};

struct UtilizationReport {
  std::vector<UtilizationCell> cells;
};

UtilizationReport utilization(Model& model, const Dataset& dataset,
                              int batch_size = 512);

void write_utilization_csv(std::ostream& os, const UtilizationReport& report);

// Per-step KL sums extracted from a training step log (CSV written by
// train_model); the raw aux components, logged regardless of the lambdas.
struct KlCurves {
  std::vector<long> steps;
  std::vector<double> kl_specific;
  std::vector<double> kl_shared;
};

KlCurves kl_curves(std::istream& steps_log);

}  // namespace aesm2
