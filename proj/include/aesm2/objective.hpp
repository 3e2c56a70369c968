#pragma once

#include <span>
#include <vector>

#include "aesm2/model.hpp"
#include "aesm2/tensor.hpp"

namespace aesm2 {

struct LossWeights {
  double ctr = 1.0;       // lambda for the CTR task
  double ctcvr = 1.0;     // lambda for the CTCVR task
  double specific = 0.1;  // lambda_sp
  double shared = 0.1;    // lambda_sh
  double l2 = 1e-5;       // gamma
};

// Scalar values of every component plus the differentiable total on the tape.
// total = ctr*bce_ctr + ctcvr*bce_ctcvr + sp*aux_specific + sh*aux_shared +
// gamma*l2, reconstructable from the parts within 1e-12.
struct LossBreakdown {
  double bce_ctr = 0.0;
  double bce_ctcvr = 0.0;
  double aux_specific = 0.0;  // raw KL sum (mean over batch), before lambda
  double aux_shared = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  Tensor total_node;
};

// Pointwise cross entropy with the standard [1e-12, 1-1e-12] clamp.
double bce_loss(double pred, int label);

// Mean over the batch of sum over layers and selected specific experts of
// KL(p_branch, G-tilde row). Layers without a recorded G-tilde (dense or
// static gating) contribute nothing.
Tensor aux_specific_loss(Tape& tape, const ForwardTrace& trace);

// Same with the uniform reference over the shared sets; counted once per
// layer since the shared selection does not depend on the branch.
Tensor aux_shared_loss(Tape& tape, const ForwardTrace& trace);

LossBreakdown total_loss(Tape& tape, const TaskPredictions& preds,
                         const Batch& batch, const ForwardTrace& trace,
                         const LossWeights& weights,
                         std::span<NamedParam> params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update over all parameters with their accumulated gradients.
  void step(std::span<NamedParam> params);
  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

void zero_grads(std::span<NamedParam> params);

}  // namespace aesm2
