#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "aesm2/ops.hpp"
#include "aesm2/tensor.hpp"

namespace aesm2 {

// Masked gate entries get this sentinel instead of -inf: after a softmax the
// off-set weights round to exactly 0 in double precision while everything
// stays finite.
inline constexpr double kGateMaskSentinel = -1e9;

// Specific/shared expert choice for one gate (one scenario or task branch).
// `specific` holds the k_specific experts whose normalized gating row is
// closest in KL to the one-hot branch indicator, `shared` the k_shared
// closest to uniform. Both are ordered by score (ties to the lowest index)
// and may overlap; `active` is their deduplicated sorted union.
struct SelectionResult {
  int branch = 0;
  std::vector<int> specific;
  std::vector<int> shared;
  std::vector<double> specific_scores;  // h = -KL, aligned with `specific`
  std::vector<double> shared_scores;
  std::vector<int> active;
};

// Row-softmaxed gating matrix for one input: raw relevance scores G and
// their per-expert-row softmax G-tilde, both n x m.
struct GatingMatrix {
  Tensor raw;
  Tensor normalized;
  int n_experts = 0;
  int n_branches = 0;
};

std::vector<double> one_hot(int m, int j);
std::vector<double> uniform_dist(int m);

// sum_i p_i * ln(p_i / q_i) with 0 * ln 0 = 0. Requires p to sum to ~1 with
// entries in [0, 1]; throws DomainError when q has a zero where p does not.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// normalized is the row-major n x m G-tilde with strictly positive rows
// summing to 1 (softmax output). Ties break toward the lower expert index.
SelectionResult select_experts(const double* normalized, int n, int m,
                               int branch, int k_specific, int k_shared);
SelectionResult select_experts(const Tensor& normalized, int branch,
                               int k_specific, int k_shared);

GatingMatrix normalize_gates(Tape& tape, const Tensor& raw);

// Copies the entries of `active`, sets everything else to the mask sentinel.
// raw_gate is [1 x n] (or 1-d of length n).
Tensor mask_gate(Tape& tape, const Tensor& raw_gate,
                 const std::vector<int>& active);

// Gate logits for one branch: gate_w · [input, branch_embedding] + gate_b,
// plus N(0, (noise_scale * n)^2) exploration noise while training. input and
// branch_embedding are [1 x d] rows.
Tensor compute_gate(Tape& tape, const Tensor& input,
                    const Tensor& branch_embedding, const Tensor& gate_w,
                    const Tensor& gate_b, double noise_scale, bool training,
                    RandomSource& rng);

// One line of the selection trace log (line-delimited JSON).
void append_selection_trace(std::ostream& os, long step, int layer,
                            const SelectionResult& sel);

}  // namespace aesm2
