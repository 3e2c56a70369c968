#include <algorithm>
#include <cmath>
#include <cstddef>

#include "aesm2/kernels.hpp"

// Reference lane. Plain expressions, no FMA contraction (the build sets
// -ffp-contract=off), fixed accumulation order.

namespace aesm2::kernels {
namespace {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate) {
  if (!accumulate)
    std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<std::size_t>(p) * m;
    const double* brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void axpy(int n, double alpha, const double* x, double* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(int n, const double* x, const double* y) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void relu(int n, const double* x, double* y) {
  for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad(int n, const double* y, const double* gy, double* gx) {
  for (int i = 0; i < n; ++i)
    if (y[i] > 0.0) gx[i] += gy[i];
}

void adam(int n, double* p, const double* g, double* m, double* v, double lr,
          double beta1, double beta2, double eps, double bc1, double bc2) {
  for (int i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] = p[i] - lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table{"scalar", gemm_nn, gemm_nt,   gemm_tn, axpy,
                             dot,      relu,    relu_grad, adam};
  return table;
}

}  // namespace aesm2::kernels
