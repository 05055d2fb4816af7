#ifndef BIFRL_KERNELS_HPP
#define BIFRL_KERNELS_HPP

// Dense double-precision kernels behind the network substrate.
// Every kernel has a scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The backend is picked once at startup from
// cpuid (override with force_backend or BIFRL_KERNELS=scalar|avx2).
// The two backends agree to rounding error, not bitwise: the AVX2
// reductions use 4 partial lanes and fused multiply-adds.

#include <cstddef>

namespace bifrl::kern {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(const double* A, const double* B, double* C, int m, int n,
                  int k, bool accumulate);
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(const double* A, const double* B, double* C, int m, int n,
                  int k, bool accumulate);
  // C[m x n] (+)= A[k x m]^T * B[k x n]
  void (*gemm_tn)(const double* A, const double* B, double* C, int m, int n,
                  int k, bool accumulate);
  // Y[r][c] += b[c]
  void (*add_bias_rows)(double* Y, const double* b, int rows, int cols);
  // db[c] += sum_r dY[r][c]
  void (*col_sums)(const double* dY, double* db, int rows, int cols);
  void (*relu)(double* y, const double* x, int n);
  // dx[i] = dy[i] * (x[i] > 0), x is the pre-activation
  void (*relu_backward)(double* dx, const double* x, const double* dy, int n);
  double (*dot)(const double* a, const double* b, int n);
  void (*axpy)(double a, const double* x, double* y, int n);
  void (*scal)(double a, double* x, int n);
  double (*sum)(const double* x, int n);
  // Adam update with precomputed bias corrections bc1 = 1-beta1^t, bc2 = 1-beta2^t
  void (*adam_step)(double* p, double* m, double* v, const double* g, int n,
                    double lr, double beta1, double beta2, double eps,
                    double bc1, double bc2);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif

bool avx2_supported();
Backend active_backend();
const char* backend_name();
// Must be called before the first kernel use to take effect everywhere.
void force_backend(Backend b);

const KernelTable& table();

// Convenience wrappers over the active table.
inline void gemm_nt(const double* A, const double* B, double* C, int m, int n,
                    int k, bool acc = false) {
  table().gemm_nt(A, B, C, m, n, k, acc);
}
inline void gemm_nn(const double* A, const double* B, double* C, int m, int n,
                    int k, bool acc = false) {
  table().gemm_nn(A, B, C, m, n, k, acc);
}
inline void gemm_tn(const double* A, const double* B, double* C, int m, int n,
                    int k, bool acc = false) {
  table().gemm_tn(A, B, C, m, n, k, acc);
}
inline void add_bias_rows(double* Y, const double* b, int rows, int cols) {
  table().add_bias_rows(Y, b, rows, cols);
}
inline void col_sums(const double* dY, double* db, int rows, int cols) {
  table().col_sums(dY, db, rows, cols);
}
inline void relu(double* y, const double* x, int n) { table().relu(y, x, n); }
inline void relu_backward(double* dx, const double* x, const double* dy,
                          int n) {
  table().relu_backward(dx, x, dy, n);
}
inline double dot(const double* a, const double* b, int n) {
  return table().dot(a, b, n);
}
inline void axpy(double a, const double* x, double* y, int n) {
  table().axpy(a, x, y, n);
}
inline void scal(double a, double* x, int n) { table().scal(a, x, n); }
inline double sum(const double* x, int n) { return table().sum(x, n); }
inline void adam_step(double* p, double* m, double* v, const double* g, int n,
                      double lr, double beta1, double beta2, double eps,
                      double bc1, double bc2) {
  table().adam_step(p, m, v, g, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace bifrl::kern

#endif
