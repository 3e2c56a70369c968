#include "aesm2/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "aesm2/error.hpp"

namespace aesm2 {

std::optional<double> auc(std::span<const double> scores,
                          std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("auc: score/label count mismatch");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks over tie blocks, 1-based.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) *
                                      (static_cast<double>(pos) + 1.0);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> MetricReport::find(int scenario,
                                         const std::string& task) const {
  for (const auto& c : cells)
    if (c.scenario == scenario && c.task == task) return c.auc;
  return std::nullopt;
}

Predictions predict(Model& model, const Dataset& dataset, int batch_size) {
  Predictions out;
  out.ctr.reserve(dataset.instances.size());
  BatchIterator it(dataset, batch_size, 0, /*shuffle=*/false);
  Batch batch;
  RandomSource rng(0);
  while (it.next(batch)) {
    Tape tape;
    tape.set_recording(false);
    TaskPredictions preds = model.forward(tape, batch, false, rng, nullptr);
    for (int b = 0; b < batch.size; ++b) {
      out.ctr.push_back(preds.ctr.values()[static_cast<std::size_t>(b)]);
      out.ctcvr.push_back(preds.ctcvr.values()[static_cast<std::size_t>(b)]);
      out.click.push_back(static_cast<int>(batch.click[static_cast<std::size_t>(b)]));
      out.conversion.push_back(
          static_cast<int>(batch.conversion[static_cast<std::size_t>(b)]));
      out.scenario.push_back(batch.scenario[static_cast<std::size_t>(b)]);
    }
  }
  return out;
}

namespace {

MetricCell make_cell(const DatasetSchema& schema, int scenario,
                     const std::string& task, std::span<const double> scores,
                     std::span<const int> labels) {
  MetricCell cell;
  cell.scenario = scenario;
  cell.scenario_name = scenario < 0 ? "all" : scenario_label(schema, scenario);
  cell.task = task;
  cell.count = static_cast<int>(scores.size());
  cell.positives = static_cast<int>(
      std::count(labels.begin(), labels.end(), 1));
  if (!scores.empty()) cell.auc = auc(scores, labels);
  return cell;
}

}  // namespace

MetricReport evaluate(Model& model, const Dataset& dataset, int batch_size) {
  const Predictions p = predict(model, dataset, batch_size);
  const int n_scen = dataset.schema.scenario_count();
  MetricReport report;

  for (int s = -1; s < n_scen; ++s) {
    std::vector<double> ctr_scores, ctcvr_scores;
    std::vector<int> click_labels, conv_labels;
    for (std::size_t i = 0; i < p.ctr.size(); ++i) {
      if (s >= 0 && p.scenario[i] != s) continue;
      ctr_scores.push_back(p.ctr[i]);
      ctcvr_scores.push_back(p.ctcvr[i]);
      click_labels.push_back(p.click[i]);
      conv_labels.push_back(p.conversion[i]);
    }
    report.cells.push_back(
        make_cell(dataset.schema, s, "ctr", ctr_scores, click_labels));
    report.cells.push_back(
        make_cell(dataset.schema, s, "ctcvr", ctcvr_scores, conv_labels));
  }
  return report;
}

void write_metric_report_kv(std::ostream& os, const MetricReport& report) {
  os.precision(6);
  for (const auto& c : report.cells) {
    os << "scenario=" << c.scenario_name << " task=" << c.task << " auc=";
    if (c.auc)
      os << *c.auc;
    else
      os << "undefined";
    os << " n=" << c.count << " positives=" << c.positives << "\n";
  }
}

void write_metric_table_csv(
    std::ostream& os,
    const std::vector<std::pair<std::string, MetricReport>>& rows) {
  if (rows.empty()) return;
  os << "model";
  for (const auto& c : rows.front().second.cells)
    os << ',' << c.scenario_name << "_auc_" << c.task;
  os << '\n';
  os.precision(6);
  os << std::fixed;
  for (const auto& [name, report] : rows) {
    os << name;
    for (const auto& c : report.cells) {
      os << ',';
      if (c.auc) os << *c.auc;
    }
    os << '\n';
  }
}

TransferMatrices transfer_matrix(const std::vector<Model*>& models,
                                 const std::vector<Dataset>& test_sets) {
  if (models.empty() || models.size() != test_sets.size())
    throw ContractError("transfer_matrix: need one model and one test set per scenario");
  const int s = static_cast<int>(models.size());
  TransferMatrices out;
  for (int j = 0; j < s; ++j)
    out.scenario_names.push_back(
        scenario_label(test_sets[static_cast<std::size_t>(j)].schema, j));
  for (const auto& task : test_sets.front().schema.tasks)
    out.by_task[task].assign(static_cast<std::size_t>(s),
                             std::vector<std::optional<double>>(static_cast<std::size_t>(s)));
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      const MetricReport r =
          evaluate(*models[static_cast<std::size_t>(i)], test_sets[static_cast<std::size_t>(j)]);
      out.by_task["ctr"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          r.find(j, "ctr");
      out.by_task["ctcvr"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          r.find(j, "ctcvr");
    }
  }
  return out;
}

void write_transfer_csv(std::ostream& os, const TransferMatrices& matrices,
                        const std::string& task) {
  auto it = matrices.by_task.find(task);
  if (it == matrices.by_task.end())
    throw ContractError("transfer matrix has no task '" + task + "'");
  os << "train\\test";
  for (const auto& name : matrices.scenario_names) os << ',' << name;
  os << '\n';
  os.precision(6);
  os << std::fixed;
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    os << matrices.scenario_names[i];
    for (const auto& v : it->second[i]) {
      os << ',';
      if (v) os << *v;
    }
    os << '\n';
  }
}

UtilizationReport utilization(Model& model, const Dataset& dataset,
                              int batch_size) {
  // counts[layer][group][expert] -> {specific hits, shared hits}; the shared
  // tally only reads slot 0 of task layers since the set is branch
  // independent there.
  struct Tally {
    std::vector<double> specific, shared;
    double group_count = 0.0;
  };
  std::vector<std::map<std::string, Tally>> tallies;
  std::vector<std::pair<int, bool>> layer_meta;  // n, task_level

  BatchIterator it(dataset, batch_size, 0, /*shuffle=*/false);
  Batch batch;
  RandomSource rng(0);
  while (it.next(batch)) {
    Tape tape;
    tape.set_recording(false);
    ForwardTrace trace;
    model.forward(tape, batch, false, rng, &trace);
    if (tallies.empty()) {
      tallies.resize(trace.layers.size());
      for (const auto& lt : trace.layers)
        layer_meta.push_back({lt.n, lt.task_level});
    }
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
      const LayerTrace& lt = trace.layers[l];
      for (std::size_t slot = 0; slot < lt.selections.size(); ++slot) {
        for (int b = 0; b < batch.size; ++b) {
          const SelectionResult& sel = lt.selections[slot][static_cast<std::size_t>(b)];
          const std::string group =
              lt.task_level
                  ? dataset.schema.tasks[static_cast<std::size_t>(slot)]
                  : scenario_label(dataset.schema,
                                   batch.scenario[static_cast<std::size_t>(b)]);
          Tally& t = tallies[l][group];
          if (t.specific.empty()) {
            t.specific.assign(static_cast<std::size_t>(lt.n), 0.0);
            t.shared.assign(static_cast<std::size_t>(lt.n), 0.0);
          }
          t.group_count += 1.0;
          for (int k : sel.specific) t.specific[static_cast<std::size_t>(k)] += 1.0;
          for (int k : sel.shared) t.shared[static_cast<std::size_t>(k)] += 1.0;
        }
      }
    }
  }

  UtilizationReport report;
  for (std::size_t l = 0; l < tallies.size(); ++l) {
    for (const auto& [group, t] : tallies[l]) {
      for (int k = 0; k < layer_meta[l].first; ++k) {
        UtilizationCell cell;
        cell.layer = static_cast<int>(l);
        cell.task_level = layer_meta[l].second;
        cell.group = group;
        cell.expert = k;
        if (t.group_count > 0.0) {
          cell.specific_freq = t.specific[static_cast<std::size_t>(k)] / t.group_count;
          cell.shared_freq = t.shared[static_cast<std::size_t>(k)] / t.group_count;
        }
        report.cells.push_back(cell);
      }
    }
  }
  return report;
}

void write_utilization_csv(std::ostream& os, const UtilizationReport& report) {
  os << "layer,level,group,expert,specific_freq,shared_freq\n";
  os.precision(6);
  os << std::fixed;
  for (const auto& c : report.cells)
    os << c.layer << ',' << (c.task_level ? "task" : "scenario") << ','
       << c.group << ',' << c.expert << ',' << c.specific_freq << ','
       << c.shared_freq << '\n';
}

KlCurves kl_curves(std::istream& steps_log) {
  std::string header;
  if (!std::getline(steps_log, header))
    throw DataError("kl_curves: empty step log");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    throw DataError("kl_curves: step log is missing column '" + name + "'");
  };
  const int c_step = col_of("step");
  const int c_sp = col_of("kl_specific");
  const int c_sh = col_of("kl_shared");

  KlCurves out;
  std::string line;
  long line_no = 1;
  while (std::getline(steps_log, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> row;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (static_cast<int>(row.size()) <= std::max({c_step, c_sp, c_sh}))
      throw DataError("kl_curves: malformed step log line " +
                      std::to_string(line_no));
    out.steps.push_back(std::stol(row[static_cast<std::size_t>(c_step)]));
    out.kl_specific.push_back(std::stod(row[static_cast<std::size_t>(c_sp)]));
    out.kl_shared.push_back(std::stod(row[static_cast<std::size_t>(c_sh)]));
  }
  return out;
}

}  // namespace aesm2
