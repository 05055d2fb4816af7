// Scalar reference kernels. These define the semantics the SIMD
// variants are equivalence-tested against.

#include <cmath>
#include <cstring>

#include "bifrl/kernels.hpp"

namespace bifrl::kern {
namespace {

void s_gemm_nt(const double* A, const double* B, double* C, int m, int n,
               int k, bool acc) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b = B + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int l = 0; l < k; ++l) s += a[l] * b[l];
      c[j] = acc ? c[j] + s : s;
    }
  }
}

void s_gemm_nn(const double* A, const double* B, double* C, int m, int n,
               int k, bool acc) {
  for (int i = 0; i < m; ++i) {
    double* c = C + static_cast<size_t>(i) * n;
    if (!acc) std::memset(c, 0, sizeof(double) * n);
    const double* a = A + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const double al = a[l];
      const double* b = B + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) c[j] += al * b[j];
    }
  }
}

void s_gemm_tn(const double* A, const double* B, double* C, int m, int n,
               int k, bool acc) {
  if (!acc) std::memset(C, 0, sizeof(double) * m * n);
  for (int l = 0; l < k; ++l) {
    const double* a = A + static_cast<size_t>(l) * m;
    const double* b = B + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const double ai = a[i];
      double* c = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += ai * b[j];
    }
  }
}

void s_add_bias_rows(double* Y, const double* b, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    double* y = Y + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) y[c] += b[c];
  }
}

void s_col_sums(const double* dY, double* db, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* y = dY + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) db[c] += y[c];
  }
}

void s_relu(double* y, const double* x, int n) {
  for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_backward(double* dx, const double* x, const double* dy, int n) {
  for (int i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

double s_dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void s_axpy(double a, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_scal(double a, double* x, int n) {
  for (int i = 0; i < n; ++i) x[i] *= a;
}

double s_sum(const double* x, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i];
  return s;
}

void s_adam_step(double* p, double* m, double* v, const double* g, int n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2) {
  for (int i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t = {s_gemm_nt,  s_gemm_nn, s_gemm_tn,
                                s_add_bias_rows, s_col_sums, s_relu,
                                s_relu_backward, s_dot,     s_axpy,
                                s_scal,     s_sum,     s_adam_step};
  return t;
}

}  // namespace bifrl::kern
