#include "aesm2/train.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "aesm2/evaluation.hpp"
#include "aesm2/objective.hpp"
#include "aesm2/selection.hpp"

namespace aesm2 {

namespace {

std::vector<std::vector<double>> snapshot_params(std::vector<NamedParam>& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.size());
  for (const auto& p : params) snap.push_back(p.tensor.values());
  return snap;
}

void restore_params(std::vector<NamedParam>& params,
                    const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].tensor.values() = snap[i];
}

}  // namespace

TrainResult train_model(Model& model, const Dataset& train, const Dataset& val,
                        const TrainSettings& settings, std::uint64_t seed,
                        std::ostream* step_log, std::ostream* selection_log) {
  if (train.instances.empty()) throw DataError("train_model: empty training set");

  Adam optimizer(settings.adam);
  RandomSource noise_rng(derive_seed(seed, "gate-noise"));
  auto& params = model.params();

  if (step_log)
    *step_log << "step,epoch,bce_ctr,bce_ctcvr,kl_specific,kl_shared,l2,total\n";

  TrainResult result;
  std::vector<std::vector<double>> best = snapshot_params(params);
  double best_auc = -1.0;
  int since_improvement = 0;
  long step = 0;

  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    BatchIterator batches(train, settings.batch_size,
                          derive_seed(seed, "shuffle-" + std::to_string(epoch)));
    Batch batch;
    while (batches.next(batch)) {
      Tape tape;
      ForwardTrace trace;
      TaskPredictions preds = model.forward(tape, batch, true, noise_rng, &trace);
      LossBreakdown loss =
          total_loss(tape, preds, batch, trace, settings.weights, params);
      if (!std::isfinite(loss.total))
        throw Error("training diverged: non-finite loss at step " +
                    std::to_string(step) + " (epoch " + std::to_string(epoch) + ")");
      zero_grads(params);
      tape.backward(loss.total_node);
      optimizer.step(params);
      tape.clear();

      if (step_log && step % settings.log_every == 0) {
        step_log->precision(12);
        *step_log << step << ',' << epoch << ',' << loss.bce_ctr << ','
                  << loss.bce_ctcvr << ',' << loss.aux_specific << ','
                  << loss.aux_shared << ',' << loss.l2 << ',' << loss.total
                  << '\n';
      }
      if (selection_log && step % (settings.log_every * 10) == 0) {
        for (std::size_t l = 0; l < trace.layers.size(); ++l)
          for (const auto& slot : trace.layers[l].selections)
            if (!slot.empty())
              append_selection_trace(*selection_log, step, static_cast<int>(l),
                                     slot.front());
      }
      ++step;
    }

    const MetricReport report = evaluate(model, val, 512);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.val_auc_ctr = report.find(-1, "ctr").value_or(0.5);
    rec.val_auc_ctcvr = report.find(-1, "ctcvr").value_or(0.5);
    rec.improved = rec.val_auc_ctr > best_auc;
    if (rec.improved) {
      best_auc = rec.val_auc_ctr;
      best = snapshot_params(params);
      result.best_epoch = epoch;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    result.epochs.push_back(rec);
    if (since_improvement >= settings.patience) break;
  }

  restore_params(params, best);
  result.best_val_auc_ctr = best_auc;
  result.steps = step;
  return result;
}

}  // namespace aesm2
