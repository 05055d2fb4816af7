#ifndef BIFRL_NET_HPP
#define BIFRL_NET_HPP

// Function-approximation substrate: fully connected ReLU networks with
// flat parameter storage, exact hand-derived backprop, diagonal-Gaussian
// output heads and an Adam optimizer. All math in double.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bifrl/rng.hpp"

namespace bifrl {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 0.5;

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Soft clamp of a raw log-variance into (kLogVarMin, ~kLogVarMax).
// Differentiable everywhere; overshoots the upper bound by at most
// exp(kLogVarMin - kLogVarMax) ~ 3e-5.
inline double clamp_logvar(double raw, double* dgrad = nullptr) {
  const double t = kLogVarMax - softplus(kLogVarMax - raw);
  const double lv = kLogVarMin + softplus(t - kLogVarMin);
  if (dgrad) *dgrad = sigmoid(kLogVarMax - raw) * sigmoid(t - kLogVarMin);
  return lv;
}

struct MlpLayout {
  int in = 0;
  int out = 0;
  std::vector<int> l_in, l_out;  // per-layer fan-in / fan-out
  std::vector<int> w_off, b_off;
  int n_params = 0;

  int n_layers() const { return static_cast<int>(l_in.size()); }

  static MlpLayout make(int in, const std::vector<int>& hidden, int out);
};

// Per-call scratch for forward/backward. Reusable across calls; grows as
// needed. One cache may be in flight per network evaluation.
struct MlpCache {
  int batch = 0;
  std::vector<std::vector<double>> z;  // pre-activations per layer
  std::vector<std::vector<double>> a;  // post-ReLU per hidden layer
  std::vector<double> x;               // input copy
  std::vector<double> buf0, buf1;      // backward scratch
};

struct Mlp {
  MlpLayout layout;
  std::vector<double> params;

  Mlp() = default;
  Mlp(int in, const std::vector<int>& hidden, int out)
      : layout(MlpLayout::make(in, hidden, out)),
        params(layout.n_params, 0.0) {}

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void init(Rng& rng);

  // X row-major [batch x in]; returns pointer to [batch x out] held by
  // the cache. Deterministic and const.
  const double* forward(const double* X, int batch, MlpCache& c) const;

  // dY [batch x out] from the matching forward. Accumulates parameter
  // gradients into grad (layout.n_params) when non-null; writes input
  // gradients [batch x in] into dX when non-null.
  void backward(const MlpCache& c, const double* dY, double* grad,
                double* dX) const;

  double* w(int layer) { return params.data() + layout.w_off[layer]; }
  const double* w(int layer) const {
    return params.data() + layout.w_off[layer];
  }
  double* b(int layer) { return params.data() + layout.b_off[layer]; }
  const double* b(int layer) const {
    return params.data() + layout.b_off[layer];
  }
};

// Mean vector plus diagonal log-variance, the output of a Gaussian head.
struct GaussianHead {
  std::vector<double> mean;
  std::vector<double> log_var;

  int dim() const { return static_cast<int>(mean.size()); }
};

// View over a batched Gaussian-head evaluation: raw net output rows
// [batch x 2d] plus clamped log-variances and clamp derivatives.
struct HeadBatch {
  int batch = 0;
  int d = 0;
  const double* raw = nullptr;         // [batch x 2d]
  std::vector<double> log_var;         // [batch x d]
  std::vector<double> dclamp;          // [batch x d]

  const double* mean_row(int r) const { return raw + static_cast<size_t>(r) * 2 * d; }
  const double* lv_row(int r) const { return log_var.data() + static_cast<size_t>(r) * d; }
};

// Interpret Y as [mean | raw_log_var] rows and apply the soft clamp.
HeadBatch make_head_batch(const double* Y, int batch, int d);

// Writes head-level gradients back into net-output coordinates:
// dY[:,0:d] = dmean, dY[:,d:2d] = dlogvar * dclamp.
void head_grads_to_raw(const HeadBatch& hb, const double* dmean,
                       const double* dlogvar, double* dY);

// Gaussian negative log-likelihood in the model-loss convention:
//   sum_i (mean_i - t_i)^2 * exp(-lv_i) + lv_i
// (quadratic form plus log-determinant; no 1/2 factor, no constant).
double gaussian_nll(const double* mean, const double* log_var,
                    const double* target, int d);
double gaussian_nll(const GaussianHead& h, const std::vector<double>& target);

// d nll / d mean and d nll / d log_var at the same point.
void gaussian_nll_grad(const double* mean, const double* log_var,
                       const double* target, int d, double* dmean,
                       double* dlogvar);

// sample = mean + exp(log_var/2) * eps with eps ~ N(0, I). If eps_out is
// non-null the standard-normal draw is stored for reparameterized paths.
void sample_diag_gaussian(const double* mean, const double* log_var, int d,
                          Rng& rng, double* out, double* eps_out = nullptr);
std::vector<double> sample_diag_gaussian(const GaussianHead& h, Rng& rng);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  int64_t t = 0;
  int64_t rejected = 0;

  explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

  void ensure(size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
  }

  // Returns false (and counts) when the gradient is not finite; the
  // parameters are left untouched in that case.
  bool step(std::vector<double>& p, const std::vector<double>& g);
};

bool all_finite(const double* x, size_t n);
inline bool all_finite(const std::vector<double>& x) {
  return all_finite(x.data(), x.size());
}

// Single-sample convenience used by the spec-level ops and tests.
GaussianHead gaussian_forward(const Mlp& net, const std::vector<double>& x);

}  // namespace bifrl

#endif
