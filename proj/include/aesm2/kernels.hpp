#pragma once

#include <string_view>
#include <vector>

namespace aesm2::kernels {

// Dense row-major kernels, one table per lane (scalar reference, AVX2).
//
// gemm family: C (+)= op(A)·op(B). Every row of C is computed from the
// matching row of A alone, in a fixed k-order, so a batched call reproduces
// the corresponding single-row calls bit for bit within one lane.
//
// axpy/relu/relu_grad/adam use the same elementwise expression order in every
// lane and are bit-identical across lanes; gemm/dot lanes may differ in the
// last ulps (FMA contraction, vectorized reduction order).
struct Kernels {
  const char* name;

  // c[m x n] (+)= a[m x k] · b[k x n]
  void (*gemm_nn)(int m, int n, int k, const double* a, const double* b,
                  double* c, bool accumulate);
  // c[m x n] (+)= a[m x k] · b[n x k]^T
  void (*gemm_nt)(int m, int n, int k, const double* a, const double* b,
                  double* c, bool accumulate);
  // c[m x n] (+)= a[k x m]^T · b[k x n]
  void (*gemm_tn)(int m, int n, int k, const double* a, const double* b,
                  double* c, bool accumulate);

  // y += alpha * x
  void (*axpy)(int n, double alpha, const double* x, double* y);
  double (*dot)(int n, const double* x, const double* y);

  // y = max(0, x); gx += gy where y > 0
  void (*relu)(int n, const double* x, double* y);
  void (*relu_grad)(int n, const double* y, const double* gy, double* gx);

  // Adam update with bias corrections bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
  void (*adam)(int n, double* p, const double* g, double* m, double* v,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2);
};

const Kernels& scalar_kernels();

// Lane in use; resolved once from AESM2_KERNELS ("scalar"/"avx2"/"auto",
// default auto) or an earlier select() call.
const Kernels& active();

// Force a lane by name ("auto" re-resolves). Returns false and leaves the
// active lane unchanged if the request is unavailable on this machine.
bool select(std::string_view name);

// All lanes usable on this machine (for equivalence tests).
std::vector<const Kernels*> available();

}  // namespace aesm2::kernels
