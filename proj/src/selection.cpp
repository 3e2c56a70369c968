#include "aesm2/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "aesm2/error.hpp"

namespace aesm2 {

std::vector<double> one_hot(int m, int j) {
  std::vector<double> p(static_cast<std::size_t>(m), 0.0);
  p[static_cast<std::size_t>(j)] = 1.0;
  return p;
}

std::vector<double> uniform_dist(int m) {
  return std::vector<double>(static_cast<std::size_t>(m), 1.0 / m);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw ShapeError("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 * ln 0 = 0
    if (q[i] <= 0.0)
      throw DomainError("kl_divergence: q has a zero where p is nonzero");
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

namespace {

// Indices of the k largest scores, ties broken toward the lower index.
std::vector<int> top_k(const std::vector<double>& scores, int k) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

}  // namespace

SelectionResult select_experts(const double* normalized, int n, int m,
                               int branch, int k_specific, int k_shared) {
  if (k_specific < 1 || k_specific > n || k_shared < 1 || k_shared > n)
    throw ConfigError("select_experts: K must be in [1, n]");
  if (branch < 0 || branch >= m)
    throw ContractError("select_experts: branch index out of range");

  const std::vector<double> p = one_hot(m, branch);
  const std::vector<double> q = uniform_dist(m);
  std::vector<double> h_specific(static_cast<std::size_t>(n));
  std::vector<double> h_shared(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    std::span<const double> row(normalized + static_cast<std::size_t>(k) * m,
                                static_cast<std::size_t>(m));
    h_specific[static_cast<std::size_t>(k)] = -kl_divergence(p, row);
    h_shared[static_cast<std::size_t>(k)] = -kl_divergence(q, row);
  }

  SelectionResult out;
  out.branch = branch;
  out.specific = top_k(h_specific, k_specific);
  out.shared = top_k(h_shared, k_shared);
  for (int i : out.specific)
    out.specific_scores.push_back(h_specific[static_cast<std::size_t>(i)]);
  for (int i : out.shared)
    out.shared_scores.push_back(h_shared[static_cast<std::size_t>(i)]);
  out.active = out.specific;
  out.active.insert(out.active.end(), out.shared.begin(), out.shared.end());
  std::sort(out.active.begin(), out.active.end());
  out.active.erase(std::unique(out.active.begin(), out.active.end()),
                   out.active.end());
  return out;
}

SelectionResult select_experts(const Tensor& normalized, int branch,
                               int k_specific, int k_shared) {
  if (normalized.ndim() != 2)
    throw ShapeError("select_experts: expected n x m gating matrix");
  return select_experts(normalized.data(), normalized.dim(0),
                        normalized.dim(1), branch, k_specific, k_shared);
}

GatingMatrix normalize_gates(Tape& tape, const Tensor& raw) {
  GatingMatrix g;
  g.raw = raw;
  g.normalized = softmax_rows(tape, raw);
  g.n_experts = raw.dim(0);
  g.n_branches = raw.dim(1);
  return g;
}

Tensor mask_gate(Tape& tape, const Tensor& raw_gate,
                 const std::vector<int>& active) {
  if (active.empty()) throw ContractError("mask_gate: empty active set");
  if (raw_gate.ndim() == 2) {
    if (raw_gate.dim(0) != 1)
      throw ShapeError("mask_gate: expected a single gate vector");
    return mask_columns(tape, raw_gate, {active}, kGateMaskSentinel);
  }
  if (raw_gate.ndim() != 1)
    throw ShapeError("mask_gate: expected a single gate vector");
  // 1-d gate: same masking, gradient routed by hand.
  const int n = raw_gate.dim(0);
  Tensor out({1, n});
  std::fill(out.values().begin(), out.values().end(), kGateMaskSentinel);
  for (int i : active) {
    if (i < 0 || i >= n)
      throw ContractError("mask_gate: active index out of range");
    out.values()[static_cast<std::size_t>(i)] =
        raw_gate.values()[static_cast<std::size_t>(i)];
  }
  if (tape.recording() && raw_gate.requires_grad()) {
    out.set_requires_grad(true);
    Tensor rc = raw_gate, oc = out;
    std::vector<int> ac = active;
    tape.record([rc, oc, ac]() mutable {
      const double* go = oc.grad_if_any();
      if (!go) return;
      double* gr = rc.grad();
      for (int i : ac) gr[i] += go[i];
    });
  }
  return out;
}

Tensor compute_gate(Tape& tape, const Tensor& input,
                    const Tensor& branch_embedding, const Tensor& gate_w,
                    const Tensor& gate_b, double noise_scale, bool training,
                    RandomSource& rng) {
  if (noise_scale < 0.0)
    throw ConfigError("compute_gate: negative noise scale");
  Tensor gate_in = concat(tape, {input, branch_embedding}, 1);
  Tensor logits = linear(tape, gate_in, gate_w, gate_b);
  const int n = logits.dim(1);
  if (training && noise_scale > 0.0)
    logits = add_gaussian_noise(tape, logits, noise_scale * n, rng);
  return logits;
}

void append_selection_trace(std::ostream& os, long step, int layer,
                            const SelectionResult& sel) {
  auto list = [&os](const std::vector<int>& v) {
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ',';
      os << v[i];
    }
    os << ']';
  };
  auto dlist = [&os](const std::vector<double>& v) {
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ',';
      os << v[i];
    }
    os << ']';
  };
  os << "{\"step\":" << step << ",\"layer\":" << layer
     << ",\"branch\":" << sel.branch << ",\"specific\":";
  list(sel.specific);
  os << ",\"shared\":";
  list(sel.shared);
  os << ",\"specific_scores\":";
  dlist(sel.specific_scores);
  os << ",\"shared_scores\":";
  dlist(sel.shared_scores);
  os << "}\n";
}

}  // namespace aesm2
