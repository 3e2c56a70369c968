#pragma once

#include <iosfwd>
#include <vector>

#include "aesm2/config.hpp"
#include "aesm2/model.hpp"

namespace aesm2 {

struct EpochRecord {
  int epoch = 0;
  double val_auc_ctr = 0.0;
  double val_auc_ctcvr = 0.0;
  bool improved = false;
};

struct TrainResult {
  int best_epoch = -1;
  double best_val_auc_ctr = 0.0;
  long steps = 0;
  std::vector<EpochRecord> epochs;
};

// Adam training with early stopping on merged validation CTR AUC; the model
// is left holding the best parameters seen. step_log (optional) receives one
// CSV row per step with the loss breakdown and raw KL sums; selection_log
// (optional) receives periodic selection traces for the first instance of
// the batch. Throws Error if the total loss goes non-finite.
TrainResult train_model(Model& model, const Dataset& train, const Dataset& val,
                        const TrainSettings& settings, std::uint64_t seed,
                        std::ostream* step_log = nullptr,
                        std::ostream* selection_log = nullptr);

}  // namespace aesm2
