#include "bifrl/vgan.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace bifrl {

Vgan::Vgan(int state_dim, const VganConfig& cfg, Rng& init_rng)
    : cfg_(cfg),
      state_dim_(state_dim),
      gen_(cfg.z_dim, cfg.hidden, state_dim),
      disc_(state_dim, cfg.hidden, 1),
      gen_opt_(cfg.lr),
      disc_opt_(cfg.lr) {
  gen_.init(init_rng);
  disc_.init(init_rng);
  // GAN-typical momentum
  gen_opt_.beta1 = 0.5;
  disc_opt_.beta1 = 0.5;
}

void Vgan::gen_forward(const double* Z, int n, MlpCache& c,
                       const double** out) const {
  *out = gen_.forward(Z, n, c);
}

std::vector<std::vector<double>> Vgan::sample_states(int n, Rng& rng) const {
  std::vector<std::vector<double>> out;
  if (n <= 0) return out;
  std::vector<double> Z(static_cast<size_t>(n) * cfg_.z_dim);
  rng.fill_normal(Z.data(), static_cast<int>(Z.size()));
  MlpCache c;
  const double* S = nullptr;
  gen_forward(Z.data(), n, c, &S);
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.emplace_back(S + static_cast<size_t>(i) * state_dim_,
                     S + static_cast<size_t>(i + 1) * state_dim_);
  return out;
}

double Vgan::value_term(const double* S, int n, const RegContext& ctx,
                        Rng& rng, double scale, double* dS) const {
  if (!ctx.agent) throw std::logic_error("value_term without a critic");
  const SacAgent& agent = *ctx.agent;
  const int sd = state_dim_;
  const int ad = agent.policy().action_dim();
  const double alpha = ctx.alpha;

  // pi(s): reparameterized draw
  SquashedGaussianPolicy::Sample ps =
      agent.policy().sample(S, n, rng, false);

  std::vector<double> SA(static_cast<size_t>(n) * (sd + ad));
  for (int i = 0; i < n; ++i) {
    std::memcpy(SA.data() + static_cast<size_t>(i) * (sd + ad),
                S + static_cast<size_t>(i) * sd, sizeof(double) * sd);
    std::memcpy(SA.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                ps.actions.data() + static_cast<size_t>(i) * ad,
                sizeof(double) * ad);
  }

  // frozen critics; per-sample argmin of the twin Q heads
  Mlp& q1 = const_cast<SacAgent&>(agent).q1();
  Mlp& q2 = const_cast<SacAgent&>(agent).q2();
  MlpCache q1c, q2c;
  const double* q1v = q1.forward(SA.data(), n, q1c);
  const double* q2v = q2.forward(SA.data(), n, q2c);
  std::vector<int> which(n);
  double value = 0.0;
  for (int i = 0; i < n; ++i) {
    which[i] = q1v[i] <= q2v[i] ? 0 : 1;
    value += alpha * (which[i] == 0 ? q1v[i] : q2v[i]);
  }

  // one-step reward prediction from a single uniformly chosen member
  const Ensemble* ens = ctx.forward_ens;
  int member = -1;
  MlpCache mc;
  const double* mout = nullptr;
  std::vector<double> Xn;
  std::vector<double> r_eps(n);
  const int hd = ens ? ens->head_dim() : 0;
  if (alpha < 1.0) {
    if (!ens || !ens->trained())
      throw std::logic_error("value_term needs a trained forward model");
    member = ens->pick_member(rng);
    Xn = SA;
    ens->normalizer().apply(Xn.data(), n);
    mout = ens->member(member).forward(Xn.data(), n, mc);
    for (int i = 0; i < n; ++i) {
      const double* row = mout + static_cast<size_t>(i) * 2 * hd;
      const double lv = clamp_logvar(row[2 * hd - 1]);
      r_eps[i] = rng.normal();
      const double r_hat = row[hd - 1] + std::exp(0.5 * lv) * r_eps[i];
      value += (1.0 - alpha) * r_hat;
    }
  }
  value /= n;

  if (!dS) return value;

  // ---- gradient into the states ----
  std::vector<double> dL_da(static_cast<size_t>(n) * ad, 0.0);

  // Q path: d(alpha * Qmin)/d input, critics frozen
  {
    std::vector<double> d1(n, 0.0), d2(n, 0.0);
    for (int i = 0; i < n; ++i)
      (which[i] == 0 ? d1[i] : d2[i]) = scale * alpha / n;
    std::vector<double> dX1(static_cast<size_t>(n) * (sd + ad));
    std::vector<double> dX2(static_cast<size_t>(n) * (sd + ad));
    q1.backward(q1c, d1.data(), nullptr, dX1.data());
    q2.backward(q2c, d2.data(), nullptr, dX2.data());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < sd; ++j)
        dS[static_cast<size_t>(i) * sd + j] +=
            dX1[static_cast<size_t>(i) * (sd + ad) + j] +
            dX2[static_cast<size_t>(i) * (sd + ad) + j];
      for (int j = 0; j < ad; ++j)
        dL_da[static_cast<size_t>(i) * ad + j] +=
            dX1[static_cast<size_t>(i) * (sd + ad) + sd + j] +
            dX2[static_cast<size_t>(i) * (sd + ad) + sd + j];
    }
  }

  // reward path: reparameterized unless configured constant
  if (alpha < 1.0 && ctx.reward_reparam) {
    std::vector<double> dY(static_cast<size_t>(n) * 2 * hd, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* row = mout + static_cast<size_t>(i) * 2 * hd;
      double dclamp = 0.0;
      const double lv = clamp_logvar(row[2 * hd - 1], &dclamp);
      const double coef = scale * (1.0 - alpha) / n;
      double* drow = dY.data() + static_cast<size_t>(i) * 2 * hd;
      drow[hd - 1] = coef;  // mean channel
      drow[2 * hd - 1] =
          coef * 0.5 * std::exp(0.5 * lv) * r_eps[i] * dclamp;
    }
    std::vector<double> dXn(static_cast<size_t>(n) * (sd + ad));
    const_cast<Mlp&>(ens->member(member)).backward(mc, dY.data(), nullptr,
                                                   dXn.data());
    const auto& inv_std = ens->normalizer().inv_std;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < sd; ++j)
        dS[static_cast<size_t>(i) * sd + j] +=
            dXn[static_cast<size_t>(i) * (sd + ad) + j] * inv_std[j];
      for (int j = 0; j < ad; ++j)
        dL_da[static_cast<size_t>(i) * ad + j] +=
            dXn[static_cast<size_t>(i) * (sd + ad) + sd + j] *
            inv_std[sd + j];
    }
  }

  // action dependence chains through the frozen policy into the states
  {
    std::vector<double> dS_pi(static_cast<size_t>(n) * sd, 0.0);
    agent.policy().backprop_sample(ps, dL_da.data(), nullptr, nullptr,
                                   dS_pi.data());
    for (size_t i = 0; i < dS_pi.size(); ++i) dS[i] += dS_pi[i];
  }
  return value;
}

double Vgan::value_regularizer(const double* Z, int n, const RegContext& ctx,
                               Rng& rng) const {
  MlpCache c;
  const double* S = nullptr;
  gen_forward(Z, n, c, &S);
  return value_term(S, n, ctx, rng, 1.0, nullptr);
}

double Vgan::discriminator_step(const std::vector<std::vector<double>>& real,
                                Rng& rng) {
  if (real.empty()) throw std::invalid_argument("empty real batch");
  const int nr = static_cast<int>(real.size());
  std::vector<double> R(static_cast<size_t>(nr) * state_dim_);
  for (int i = 0; i < nr; ++i)
    std::memcpy(R.data() + static_cast<size_t>(i) * state_dim_,
                real[i].data(), sizeof(double) * state_dim_);

  const int nf = cfg_.batch_size;
  std::vector<double> Z(static_cast<size_t>(nf) * cfg_.z_dim);
  rng.fill_normal(Z.data(), static_cast<int>(Z.size()));
  MlpCache gc;
  const double* F = nullptr;
  gen_forward(Z.data(), nf, gc, &F);

  std::vector<double> grad(disc_.layout.n_params, 0.0);
  double loss = 0.0;

  MlpCache dc;
  const double* dr = disc_.forward(R.data(), nr, dc);
  std::vector<double> dout(nr);
  for (int i = 0; i < nr; ++i) {
    const double diff = dr[i] - 1.0;
    loss += diff * diff / nr;
    dout[i] = 2.0 * diff / nr;
  }
  disc_.backward(dc, dout.data(), grad.data(), nullptr);

  const double* df = disc_.forward(F, nf, dc);
  dout.resize(nf);
  for (int i = 0; i < nf; ++i) {
    loss += df[i] * df[i] / nf;
    dout[i] = 2.0 * df[i] / nf;
  }
  disc_.backward(dc, dout.data(), grad.data(), nullptr);

  disc_opt_.step(disc_.params, grad);
  return loss;
}

double Vgan::generator_step(double lambda, const RegContext& ctx, Rng& rng) {
  const int n = cfg_.batch_size;
  std::vector<double> Z(static_cast<size_t>(n) * cfg_.z_dim);
  rng.fill_normal(Z.data(), static_cast<int>(Z.size()));
  MlpCache gc;
  const double* S = nullptr;
  gen_forward(Z.data(), n, gc, &S);

  // adversarial term (D(G(z)) - 1)^2 with a frozen discriminator
  MlpCache dc;
  const double* ds = disc_.forward(S, n, dc);
  double loss = 0.0;
  std::vector<double> dout(n);
  for (int i = 0; i < n; ++i) {
    const double diff = ds[i] - 1.0;
    loss += diff * diff / n;
    dout[i] = 2.0 * diff / n;
  }
  std::vector<double> dS(static_cast<size_t>(n) * state_dim_, 0.0);
  disc_.backward(dc, dout.data(), nullptr, dS.data());

  if (lambda != 0.0) {
    const double lv =
        value_term(S, n, ctx, rng, -lambda, dS.data());
    loss -= lambda * lv;
  }

  std::vector<double> grad(gen_.layout.n_params, 0.0);
  gen_.backward(gc, dS.data(), grad.data(), nullptr);
  gen_opt_.step(gen_.params, grad);
  return loss;
}

std::vector<double> Vgan::disc_scores(const double* S, int n) const {
  MlpCache c;
  const double* out = disc_.forward(S, n, c);
  return std::vector<double>(out, out + n);
}

}  // namespace bifrl
