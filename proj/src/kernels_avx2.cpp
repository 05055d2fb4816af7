// AVX2+FMA kernels. This translation unit is compiled with
// -mavx2 -mfma; it must only be entered after a cpuid check.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

#include "bifrl/kernels.hpp"

namespace bifrl::kern {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Dot-product blocked over 4 output columns at a time.
void a_gemm_nt(const double* A, const double* B, double* C, int m, int n,
               int k, bool acc) {
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    int j = 0;
    for (; j < n4; j += 4) {
      const double* b0 = B + static_cast<size_t>(j) * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      __m256d acc2 = _mm256_setzero_pd();
      __m256d acc3 = _mm256_setzero_pd();
      int l = 0;
      for (; l + 4 <= k; l += 4) {
        __m256d av = _mm256_loadu_pd(a + l);
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + l), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + l), acc1);
        acc2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + l), acc2);
        acc3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + l), acc3);
      }
      double s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
      for (; l < k; ++l) {
        const double av = a[l];
        s0 += av * b0[l];
        s1 += av * b1[l];
        s2 += av * b2[l];
        s3 += av * b3[l];
      }
      if (acc) {
        c[j] += s0;
        c[j + 1] += s1;
        c[j + 2] += s2;
        c[j + 3] += s3;
      } else {
        c[j] = s0;
        c[j + 1] = s1;
        c[j + 2] = s2;
        c[j + 3] = s3;
      }
    }
    for (; j < n; ++j) {
      const double* b = B + static_cast<size_t>(j) * k;
      __m256d accv = _mm256_setzero_pd();
      int l = 0;
      for (; l + 4 <= k; l += 4)
        accv = _mm256_fmadd_pd(_mm256_loadu_pd(a + l), _mm256_loadu_pd(b + l),
                               accv);
      double s = hsum(accv);
      for (; l < k; ++l) s += a[l] * b[l];
      c[j] = acc ? c[j] + s : s;
    }
  }
}

void a_gemm_nn(const double* A, const double* B, double* C, int m, int n,
               int k, bool acc) {
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    double* c = C + static_cast<size_t>(i) * n;
    if (!acc) std::memset(c, 0, sizeof(double) * n);
    const double* a = A + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const double al = a[l];
      const __m256d av = _mm256_set1_pd(al);
      const double* b = B + static_cast<size_t>(l) * n;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d cv = _mm256_loadu_pd(c + j);
        cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j), cv);
        _mm256_storeu_pd(c + j, cv);
      }
      for (; j < n; ++j) c[j] += al * b[j];
    }
  }
}

void a_gemm_tn(const double* A, const double* B, double* C, int m, int n,
               int k, bool acc) {
  if (!acc) std::memset(C, 0, sizeof(double) * m * n);
  const int n4 = n & ~3;
  for (int l = 0; l < k; ++l) {
    const double* a = A + static_cast<size_t>(l) * m;
    const double* b = B + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const double ai = a[i];
      const __m256d av = _mm256_set1_pd(ai);
      double* c = C + static_cast<size_t>(i) * n;
      int j = 0;
      for (; j < n4; j += 4) {
        __m256d cv = _mm256_loadu_pd(c + j);
        cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j), cv);
        _mm256_storeu_pd(c + j, cv);
      }
      for (; j < n; ++j) c[j] += ai * b[j];
    }
  }
}

void a_add_bias_rows(double* Y, const double* b, int rows, int cols) {
  const int c4 = cols & ~3;
  for (int r = 0; r < rows; ++r) {
    double* y = Y + static_cast<size_t>(r) * cols;
    int c = 0;
    for (; c < c4; c += 4)
      _mm256_storeu_pd(
          y + c, _mm256_add_pd(_mm256_loadu_pd(y + c), _mm256_loadu_pd(b + c)));
    for (; c < cols; ++c) y[c] += b[c];
  }
}

void a_col_sums(const double* dY, double* db, int rows, int cols) {
  const int c4 = cols & ~3;
  for (int r = 0; r < rows; ++r) {
    const double* y = dY + static_cast<size_t>(r) * cols;
    int c = 0;
    for (; c < c4; c += 4)
      _mm256_storeu_pd(db + c, _mm256_add_pd(_mm256_loadu_pd(db + c),
                                             _mm256_loadu_pd(y + c)));
    for (; c < cols; ++c) db[c] += y[c];
  }
}

void a_relu(double* y, const double* x, int n) {
  const __m256d z = _mm256_setzero_pd();
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void a_relu_backward(double* dx, const double* x, const double* dy, int n) {
  const __m256d z = _mm256_setzero_pd();
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

double a_dot(const double* a, const double* b, int n) {
  __m256d acc = _mm256_setzero_pd();
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void a_axpy(double a, const double* x, double* y, int n) {
  const __m256d av = _mm256_set1_pd(a);
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void a_scal(double a, double* x, int n) {
  const __m256d av = _mm256_set1_pd(a);
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

double a_sum(const double* x, int n) {
  __m256d acc = _mm256_setzero_pd();
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

void a_adam_step(double* p, double* m, double* v, const double* g, int n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d ob1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d ob2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d rbc1 = _mm256_set1_pd(1.0 / bc1);
  const __m256d rbc2 = _mm256_set1_pd(1.0 / bc2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d epsv = _mm256_set1_pd(eps);
  const int n4 = n & ~3;
  int i = 0;
  for (; i < n4; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_fmadd_pd(b1, mv, _mm256_mul_pd(ob1, gv));
    vv = _mm256_fmadd_pd(b2, vv, _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, rbc1);
    const __m256d vhat = _mm256_mul_pd(vv, rbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
    __m256d pv = _mm256_loadu_pd(p + i);
    pv = _mm256_sub_pd(
        pv, _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom));
    _mm256_storeu_pd(p + i, pv);
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] * (1.0 / bc1);
    const double vhat = v[i] * (1.0 / bc2);
    p[i] -= lr * mhat / (__builtin_sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t = {a_gemm_nt,  a_gemm_nn, a_gemm_tn,
                                a_add_bias_rows, a_col_sums, a_relu,
                                a_relu_backward, a_dot,     a_axpy,
                                a_scal,     a_sum,     a_adam_step};
  return t;
}

}  // namespace bifrl::kern

#endif  // x86-64
