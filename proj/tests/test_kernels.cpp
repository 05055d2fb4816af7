#include <cmath>
#include <vector>

#include "bifrl/kernels.hpp"
#include "bifrl/rng.hpp"
#include "doctest.h"

using namespace bifrl;
namespace k = bifrl::kern;

namespace {

std::vector<double> randv(size_t n, Rng& rng, double lo = -1.0,
                          double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// naive triple-loop oracle for all three gemm variants
std::vector<double> gemm_oracle(char mode, const std::vector<double>& A,
                                const std::vector<double>& B, int m, int n,
                                int kk) {
  std::vector<double> C(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int l = 0; l < kk; ++l) {
        double a, b;
        if (mode == 't') {  // A is [k x m]
          a = A[static_cast<size_t>(l) * m + i];
          b = B[static_cast<size_t>(l) * n + j];
        } else {
          a = A[static_cast<size_t>(i) * kk + l];
          b = (mode == 'n') ? B[static_cast<size_t>(l) * n + j]
                            : B[static_cast<size_t>(j) * kk + l];
        }
        s += a * b;
      }
      C[static_cast<size_t>(i) * n + j] = s;
    }
  return C;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b,
                  double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    CHECK(std::abs(a[i] - b[i]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("gemm variants match the naive oracle on both backends") {
  Rng rng = Rng::seeded(11);
  std::vector<const k::KernelTable*> tables = {&k::scalar_table()};
#if defined(__x86_64__)
  if (k::avx2_supported()) tables.push_back(&k::avx2_table());
#endif
  // deliberately awkward sizes to cover vector remainders
  const int shapes[][3] = {{1, 1, 1}, {2, 3, 5},  {5, 4, 7},  {3, 9, 13},
                           {8, 8, 8}, {7, 17, 5}, {16, 64, 64}};
  for (const auto* t : tables) {
    for (auto [m, n, kk] : shapes) {
      auto A = randv(static_cast<size_t>(m) * kk, rng);
      auto B_nt = randv(static_cast<size_t>(n) * kk, rng);
      auto B_nn = randv(static_cast<size_t>(kk) * n, rng);
      auto A_tn = randv(static_cast<size_t>(kk) * m, rng);

      std::vector<double> C(static_cast<size_t>(m) * n, 0.0);
      t->gemm_nt(A.data(), B_nt.data(), C.data(), m, n, kk, false);
      expect_close(C, gemm_oracle('x', A, B_nt, m, n, kk), 1e-12);

      t->gemm_nn(A.data(), B_nn.data(), C.data(), m, n, kk, false);
      expect_close(C, gemm_oracle('n', A, B_nn, m, n, kk), 1e-12);

      t->gemm_tn(A_tn.data(), B_nn.data(), C.data(), m, n, kk, false);
      expect_close(C, gemm_oracle('t', A_tn, B_nn, m, n, kk), 1e-12);

      // accumulate mode adds on top of existing contents
      auto base = randv(C.size(), rng);
      auto C2 = base;
      t->gemm_nt(A.data(), B_nt.data(), C2.data(), m, n, kk, true);
      auto want = gemm_oracle('x', A, B_nt, m, n, kk);
      for (size_t i = 0; i < want.size(); ++i) want[i] += base[i];
      expect_close(C2, want, 1e-12);
    }
  }
}

#if defined(__x86_64__)
TEST_CASE("avx2 and scalar backends agree elementwise") {
  if (!k::avx2_supported()) return;
  Rng rng = Rng::seeded(5);
  const auto& s = k::scalar_table();
  const auto& a = k::avx2_table();

  for (int n : {1, 2, 3, 4, 5, 7, 8, 31, 64, 100, 1000}) {
    auto x = randv(n, rng);
    auto y = randv(n, rng);

    CHECK(s.dot(x.data(), y.data(), n) ==
          doctest::Approx(a.dot(x.data(), y.data(), n)).epsilon(1e-12));

    std::vector<double> r1(n), r2(n);
    s.relu(r1.data(), x.data(), n);
    a.relu(r2.data(), x.data(), n);
    CHECK(r1 == r2);

    s.relu_backward(r1.data(), x.data(), y.data(), n);
    a.relu_backward(r2.data(), x.data(), y.data(), n);
    CHECK(r1 == r2);

    auto y1 = y, y2 = y;
    s.axpy(0.37, x.data(), y1.data(), n);
    a.axpy(0.37, x.data(), y2.data(), n);
    expect_close(y1, y2, 1e-14);

    auto x1 = x, x2 = x;
    s.scal(-1.7, x1.data(), n);
    a.scal(-1.7, x2.data(), n);
    CHECK(x1 == x2);

    CHECK(s.sum(x.data(), n) == doctest::Approx(a.sum(x.data(), n))
              .epsilon(1e-12));

    // adam: elementwise, should agree very tightly
    auto p1 = randv(n, rng), m1 = randv(n, rng, 0, 1), v1 = randv(n, rng, 0, 1);
    auto g = randv(n, rng);
    auto p2 = p1, m2 = m1, v2 = v1;
    s.adam_step(p1.data(), m1.data(), v1.data(), g.data(), n, 1e-3, 0.9,
                0.999, 1e-8, 0.1, 0.001);
    a.adam_step(p2.data(), m2.data(), v2.data(), g.data(), n, 1e-3, 0.9,
                0.999, 1e-8, 0.1, 0.001);
    expect_close(p1, p2, 1e-13);
    expect_close(m1, m2, 1e-13);
    expect_close(v1, v2, 1e-13);
  }
}
#endif

TEST_CASE("bias add and column sums") {
  Rng rng = Rng::seeded(3);
  for (auto [rows, cols] : {std::pair{1, 1}, {3, 5}, {4, 9}, {7, 64}}) {
    auto Y = randv(static_cast<size_t>(rows) * cols, rng);
    auto b = randv(cols, rng);
    auto want = Y;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) want[r * cols + c] += b[c];
    auto got = Y;
    k::add_bias_rows(got.data(), b.data(), rows, cols);
    expect_close(got, want, 1e-15);

    std::vector<double> db(cols, 0.0), db_want(cols, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) db_want[c] += Y[r * cols + c];
    k::col_sums(Y.data(), db.data(), rows, cols);
    expect_close(db, db_want, 1e-13);
  }
}

TEST_CASE("runtime dispatch reports a valid backend") {
  CHECK((k::active_backend() == k::Backend::Scalar ||
         k::active_backend() == k::Backend::Avx2));
  if (k::active_backend() == k::Backend::Avx2) CHECK(k::avx2_supported());
  CHECK(k::backend_name() != nullptr);
}
