#pragma once

#include <functional>
#include <vector>

#include "aesm2/rng.hpp"
#include "aesm2/tensor.hpp"

namespace aesm2 {

// Autodiff ops. Every op computes its forward result eagerly and, when the
// tape is recording and any input participates in differentiation, appends a
// backward closure. Shapes are explicit: no broadcasting beyond the bias add
// inside linear() and repeat_row().

// c[p x r] = a[p x q] · b[q x r]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// y[B x out] = x[B x in] · w[out x in]^T + b[out]
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sum(Tape& tape, const Tensor& x);

// Concatenation along `axis` (0 or 1). 1-d tensors concatenate along axis 0.
// Parts with a zero-sized concat dimension are allowed.
Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis);

// Row-wise softmax with max subtraction; rows sum to 1 and stay positive.
Tensor softmax_rows(Tape& tape, const Tensor& x);

// Softmax over each consecutive group of `group` columns of every row.
Tensor softmax_groups(Tape& tape, const Tensor& x, int group);

// out[i, :] = table[ids[i], :]; backward scatter-adds into the table rows.
Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids);

// out = row [1 x d] repeated `count` times.
Tensor repeat_row(Tape& tape, const Tensor& row, int count);

// out[b, :] = branches[ids[b]][b, :]
Tensor select_rows_by_branch(Tape& tape, const std::vector<Tensor>& branches,
                             const std::vector<int>& ids);

// branches[j] is [B x n]; out is [B x n*m] with out[b, k*m + j] =
// branches[j][b, k]: per instance, expert-row-major gating matrix layout.
Tensor interleave_columns(Tape& tape, const std::vector<Tensor>& branches);

// Copies entries listed in active[b] (sorted, unique, nonempty), sets the
// rest to `sentinel`. Gradient flows only through the copied entries.
Tensor mask_columns(Tape& tape, const Tensor& x,
                    const std::vector<std::vector<int>>& active,
                    double sentinel);

// out[b, :] = sum_i weights[b, i] * experts[i][b, :]
Tensor mixture(Tape& tape, const std::vector<Tensor>& experts,
               const Tensor& weights);

// out = x + N(0, sigma^2) i.i.d. per entry; backward is the identity.
Tensor add_gaussian_noise(Tape& tape, const Tensor& x, double sigma,
                          RandomSource& rng);

// Mean binary cross entropy over the batch; predictions are clamped to
// [1e-12, 1 - 1e-12] before the logs. Labels must be 0 or 1.
Tensor bce_mean(Tape& tape, const Tensor& pred,
                const std::vector<double>& labels);

// One KL(reference, G-tilde row) term of the auxiliary selection loss.
// ref_branch >= 0 selects the one-hot reference p_j; ref_branch == -1 the
// uniform reference q.
struct KlTerm {
  int instance;
  int expert;
  int ref_branch;
};

// scale * sum over terms of KL(ref, row) where row = g_tilde[instance,
// expert*m .. expert*m+m). Differentiable in g_tilde.
Tensor selected_kl_sum(Tape& tape, const Tensor& g_tilde, int m,
                       const std::vector<KlTerm>& terms, double scale);

Tensor sum_squares(Tape& tape, const Tensor& x);

// Scalar combine: sum_i coeffs[i] * scalars[i].
Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& scalars,
                    const std::vector<double>& coeffs);

// Max over coordinates of |analytic - numeric| / max(1, |analytic|,
// |numeric|), numeric by central differences. f must be deterministic.
double grad_check(const std::function<Tensor(Tape&, Tensor&)>& f,
                  const Tensor& at, double eps = 1e-5);

}  // namespace aesm2
