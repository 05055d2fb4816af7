#include "bifrl/net.hpp"

#include <cstring>

#include "bifrl/kernels.hpp"

namespace bifrl {

MlpLayout MlpLayout::make(int in, const std::vector<int>& hidden, int out) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("bad mlp dims");
  MlpLayout l;
  l.in = in;
  l.out = out;
  int prev = in;
  for (int h : hidden) {
    if (h <= 0) throw std::invalid_argument("bad hidden width");
    l.l_in.push_back(prev);
    l.l_out.push_back(h);
    prev = h;
  }
  l.l_in.push_back(prev);
  l.l_out.push_back(out);
  int off = 0;
  for (size_t i = 0; i < l.l_in.size(); ++i) {
    l.w_off.push_back(off);
    off += l.l_in[i] * l.l_out[i];
    l.b_off.push_back(off);
    off += l.l_out[i];
  }
  l.n_params = off;
  return l;
}

void Mlp::init(Rng& rng) {
  for (int l = 0; l < layout.n_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layout.l_in[l]));
    double* wp = w(l);
    for (int i = 0; i < layout.l_in[l] * layout.l_out[l]; ++i)
      wp[i] = rng.uniform(-bound, bound);
    double* bp = b(l);
    for (int i = 0; i < layout.l_out[l]; ++i) bp[i] = rng.uniform(-bound, bound);
  }
}

const double* Mlp::forward(const double* X, int batch, MlpCache& c) const {
  const int L = layout.n_layers();
  c.batch = batch;
  c.z.resize(L);
  c.a.resize(L > 0 ? L - 1 : 0);
  c.x.assign(X, X + static_cast<size_t>(batch) * layout.in);

  const double* cur = c.x.data();
  for (int l = 0; l < L; ++l) {
    const int nin = layout.l_in[l];
    const int nout = layout.l_out[l];
    c.z[l].resize(static_cast<size_t>(batch) * nout);
    kern::gemm_nt(cur, w(l), c.z[l].data(), batch, nout, nin, false);
    kern::add_bias_rows(c.z[l].data(), b(l), batch, nout);
    if (l < L - 1) {
      c.a[l].resize(c.z[l].size());
      kern::relu(c.a[l].data(), c.z[l].data(),
                 static_cast<int>(c.z[l].size()));
      cur = c.a[l].data();
    }
  }
  return c.z[L - 1].data();
}

void Mlp::backward(const MlpCache& c, const double* dY, double* grad,
                   double* dX) const {
  const int L = layout.n_layers();
  const int batch = c.batch;

  // dz starts as a copy of dY and is rolled backwards layer by layer.
  auto& dz = const_cast<std::vector<double>&>(c.buf0);
  auto& da = const_cast<std::vector<double>&>(c.buf1);
  dz.assign(dY, dY + static_cast<size_t>(batch) * layout.out);

  for (int l = L - 1; l >= 0; --l) {
    const int nin = layout.l_in[l];
    const int nout = layout.l_out[l];
    const double* a_prev = (l == 0) ? c.x.data() : c.a[l - 1].data();
    if (grad) {
      kern::gemm_tn(dz.data(), a_prev, grad + layout.w_off[l], nout, nin,
                    batch, true);
      kern::col_sums(dz.data(), grad + layout.b_off[l], batch, nout);
    }
    const bool need_dprev = (l > 0) || (dX != nullptr);
    if (!need_dprev) break;
    da.resize(static_cast<size_t>(batch) * nin);
    kern::gemm_nn(dz.data(), w(l), da.data(), batch, nin, nout, false);
    if (l > 0) {
      dz.resize(da.size());
      kern::relu_backward(dz.data(), c.z[l - 1].data(), da.data(),
                          static_cast<int>(da.size()));
    } else if (dX) {
      std::memcpy(dX, da.data(), sizeof(double) * da.size());
    }
  }
}

HeadBatch make_head_batch(const double* Y, int batch, int d) {
  HeadBatch hb;
  hb.batch = batch;
  hb.d = d;
  hb.raw = Y;
  hb.log_var.resize(static_cast<size_t>(batch) * d);
  hb.dclamp.resize(hb.log_var.size());
  for (int r = 0; r < batch; ++r) {
    const double* raw_lv = Y + static_cast<size_t>(r) * 2 * d + d;
    double* lv = hb.log_var.data() + static_cast<size_t>(r) * d;
    double* dc = hb.dclamp.data() + static_cast<size_t>(r) * d;
    for (int i = 0; i < d; ++i) lv[i] = clamp_logvar(raw_lv[i], &dc[i]);
  }
  return hb;
}

void head_grads_to_raw(const HeadBatch& hb, const double* dmean,
                       const double* dlogvar, double* dY) {
  const int d = hb.d;
  for (int r = 0; r < hb.batch; ++r) {
    double* out = dY + static_cast<size_t>(r) * 2 * d;
    const double* dm = dmean + static_cast<size_t>(r) * d;
    const double* dl = dlogvar + static_cast<size_t>(r) * d;
    const double* dc = hb.dclamp.data() + static_cast<size_t>(r) * d;
    for (int i = 0; i < d; ++i) {
      out[i] = dm[i];
      out[d + i] = dl[i] * dc[i];
    }
  }
}

double gaussian_nll(const double* mean, const double* log_var,
                    const double* target, int d) {
  double loss = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = mean[i] - target[i];
    loss += diff * diff * std::exp(-log_var[i]) + log_var[i];
  }
  return loss;
}

double gaussian_nll(const GaussianHead& h, const std::vector<double>& target) {
  if (h.mean.size() != target.size())
    throw std::invalid_argument("gaussian_nll: dimension mismatch");
  return gaussian_nll(h.mean.data(), h.log_var.data(), target.data(),
                      h.dim());
}

void gaussian_nll_grad(const double* mean, const double* log_var,
                       const double* target, int d, double* dmean,
                       double* dlogvar) {
  for (int i = 0; i < d; ++i) {
    const double inv = std::exp(-log_var[i]);
    const double diff = mean[i] - target[i];
    dmean[i] = 2.0 * diff * inv;
    dlogvar[i] = -diff * diff * inv + 1.0;
  }
}

void sample_diag_gaussian(const double* mean, const double* log_var, int d,
                          Rng& rng, double* out, double* eps_out) {
  for (int i = 0; i < d; ++i) {
    const double e = rng.normal();
    if (eps_out) eps_out[i] = e;
    out[i] = mean[i] + std::exp(0.5 * log_var[i]) * e;
  }
}

std::vector<double> sample_diag_gaussian(const GaussianHead& h, Rng& rng) {
  std::vector<double> out(h.dim());
  sample_diag_gaussian(h.mean.data(), h.log_var.data(), h.dim(), rng,
                       out.data());
  return out;
}

bool all_finite(const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

bool Adam::step(std::vector<double>& p, const std::vector<double>& g) {
  if (p.size() != g.size()) throw std::invalid_argument("adam: shape mismatch");
  if (!all_finite(g)) {
    ++rejected;
    return false;
  }
  ensure(p.size());
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  kern::adam_step(p.data(), m.data(), v.data(), g.data(),
                  static_cast<int>(p.size()), lr, beta1, beta2, eps, bc1, bc2);
  return true;
}

GaussianHead gaussian_forward(const Mlp& net, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != net.layout.in)
    throw std::invalid_argument("gaussian_forward: input width mismatch");
  if (net.layout.out % 2 != 0)
    throw std::invalid_argument("gaussian_forward: odd output width");
  const int d = net.layout.out / 2;
  MlpCache c;
  const double* y = net.forward(x.data(), 1, c);
  GaussianHead h;
  h.mean.assign(y, y + d);
  h.log_var.resize(d);
  for (int i = 0; i < d; ++i) h.log_var[i] = clamp_logvar(y[d + i]);
  return h;
}

}  // namespace bifrl
