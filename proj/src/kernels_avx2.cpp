// AVX2+FMA lane. Compiled with -mavx2 -mfma on x86-64 only; dispatch happens
// at runtime in kernels.cpp. gemm/dot use FMA and vectorized reductions, so
// they can differ from the scalar lane in the last ulps. axpy/relu/relu_grad/
// adam deliberately avoid FMA so they stay bit-identical to the scalar lane.

#if defined(AESM2_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "aesm2/kernels.hpp"

namespace aesm2::kernels {
namespace {

inline double hsum(__m256d v) {
  alignas(32) double t[4];
  _mm256_store_pd(t, v);
  return (t[0] + t[1]) + (t[2] + t[3]);
}

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const __m256d vav = _mm256_set1_pd(av);
      const double* brow = b + static_cast<std::size_t>(p) * n;
      int j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        __m256d c1 = _mm256_loadu_pd(crow + j + 4);
        c0 = _mm256_fmadd_pd(vav, _mm256_loadu_pd(brow + j), c0);
        c1 = _mm256_fmadd_pd(vav, _mm256_loadu_pd(brow + j + 4), c1);
        _mm256_storeu_pd(crow + j, c0);
        _mm256_storeu_pd(crow + j + 4, c1);
      }
      for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        c0 = _mm256_fmadd_pd(vav, _mm256_loadu_pd(brow + j), c0);
        _mm256_storeu_pd(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
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
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      int p = 0;
      for (; p + 8 <= k; p += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                             _mm256_loadu_pd(brow + p), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p + 4),
                             _mm256_loadu_pd(brow + p + 4), s1);
      }
      for (; p + 4 <= k; p += 4) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                             _mm256_loadu_pd(brow + p), s0);
      }
      double s = hsum(_mm256_add_pd(s0, s1));
      for (; p < k; ++p) s = std::fma(arow[p], brow[p], s);
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
      const __m256d vav = _mm256_set1_pd(av);
      double* crow = c + static_cast<std::size_t>(i) * n;
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        c0 = _mm256_fmadd_pd(vav, _mm256_loadu_pd(brow + j), c0);
        _mm256_storeu_pd(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] = std::fma(av, brow[j], crow[j]);
    }
  }
}

void axpy(int n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot(int n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(s0);
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void relu(int n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_and_pd(mask, vx));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad(int n, const double* y, const double* gy, double* gx) {
  const __m256d zero = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(y + i), zero, _CMP_GT_OQ);
    const __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), add));
  }
  for (; i < n; ++i)
    if (y[i] > 0.0) gx[i] += gy[i];
}

void adam(int n, double* p, const double* g, double* m, double* v, double lr,
          double beta1, double beta2, double eps, double bc1, double bc2) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vbc1 = _mm256_set1_pd(bc1);
  const __m256d vbc2 = _mm256_set1_pd(bc2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vm = _mm256_add_pd(_mm256_mul_pd(vb1, vm), _mm256_mul_pd(vb1c, vg));
    vv = _mm256_add_pd(_mm256_mul_pd(vb2, vv),
                       _mm256_mul_pd(vb2c, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(vm, vbc1);
    const __m256d vhat = _mm256_div_pd(vv, vbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] = p[i] - lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels table{"avx2", gemm_nn, gemm_nt,   gemm_tn, axpy,
                             dot,    relu,    relu_grad, adam};
  return table;
}

}  // namespace aesm2::kernels

#endif  // AESM2_HAVE_AVX2
