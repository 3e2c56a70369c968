#include "aesm2/objective.hpp"

#include <algorithm>
#include <cmath>

#include "aesm2/error.hpp"
#include "aesm2/kernels.hpp"

namespace aesm2 {

double bce_loss(double pred, int label) {
  if (label != 0 && label != 1)
    throw DataError("bce_loss: label must be 0 or 1");
  const double p = std::clamp(pred, 1e-12, 1.0 - 1e-12);
  return -label * std::log(p) - (1 - label) * std::log(1.0 - p);
}

namespace {

Tensor aux_loss_impl(Tape& tape, const ForwardTrace& trace, bool specific) {
  std::vector<Tensor> layer_terms;
  const double scale = trace.batch > 0 ? 1.0 / trace.batch : 0.0;
  for (const auto& layer : trace.layers) {
    if (!layer.g_tilde.defined() || layer.selections.empty()) continue;
    std::vector<KlTerm> terms;
    if (specific) {
      for (const auto& slot : layer.selections)
        for (std::size_t b = 0; b < slot.size(); ++b)
          for (int k : slot[b].specific)
            terms.push_back({static_cast<int>(b), k, slot[b].branch});
    } else {
      // One shared contribution per layer: the shared selection is branch
      // independent, so slot 0 carries it.
      const auto& slot = layer.selections.front();
      for (std::size_t b = 0; b < slot.size(); ++b)
        for (int k : slot[b].shared)
          terms.push_back({static_cast<int>(b), k, -1});
    }
    layer_terms.push_back(
        selected_kl_sum(tape, layer.g_tilde, layer.m, terms, scale));
  }
  if (layer_terms.empty()) return Tensor::scalar(0.0);
  return weighted_sum(tape, layer_terms,
                      std::vector<double>(layer_terms.size(), 1.0));
}

}  // namespace

Tensor aux_specific_loss(Tape& tape, const ForwardTrace& trace) {
  return aux_loss_impl(tape, trace, true);
}

Tensor aux_shared_loss(Tape& tape, const ForwardTrace& trace) {
  return aux_loss_impl(tape, trace, false);
}

LossBreakdown total_loss(Tape& tape, const TaskPredictions& preds,
                         const Batch& batch, const ForwardTrace& trace,
                         const LossWeights& weights,
                         std::span<NamedParam> params) {
  LossBreakdown out;
  Tensor l_ctr = bce_mean(tape, preds.ctr, batch.click);
  Tensor l_ctcvr = bce_mean(tape, preds.ctcvr, batch.conversion);
  Tensor l_sp = aux_specific_loss(tape, trace);
  Tensor l_sh = aux_shared_loss(tape, trace);

  std::vector<Tensor> sq;
  for (auto& p : params)
    if (p.weight_matrix) sq.push_back(sum_squares(tape, p.tensor));
  Tensor l2 = sq.empty() ? Tensor::scalar(0.0)
                         : weighted_sum(tape, sq, std::vector<double>(sq.size(), 1.0));

  out.bce_ctr = l_ctr.value();
  out.bce_ctcvr = l_ctcvr.value();
  out.aux_specific = l_sp.value();
  out.aux_shared = l_sh.value();
  out.l2 = l2.value();
  out.total_node = weighted_sum(
      tape, {l_ctr, l_ctcvr, l_sp, l_sh, l2},
      {weights.ctr, weights.ctcvr, weights.specific, weights.shared, weights.l2});
  out.total = out.total_node.value();
  return out;
}

void Adam::step(std::span<NamedParam> params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].tensor.values().size(), 0.0);
      v_[i].assign(params[i].tensor.values().size(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw ContractError("Adam: parameter count changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    if (m_[i].size() != t.values().size())
      throw ContractError("Adam: parameter '" + params[i].name +
                          "' changed shape between steps");
    const double* g = t.grad_if_any();
    if (g == nullptr) continue;  // never touched: zero gradient
    kernels::active().adam(t.size(), t.data(), g, m_[i].data(), v_[i].data(),
                           cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, bc1, bc2);
  }
}

void zero_grads(std::span<NamedParam> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace aesm2
