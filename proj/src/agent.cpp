#include "bifrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bifrl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

// log(1 - tanh(u)^2), stable for large |u|
inline double log1m_tanh2(double u) {
  return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

inline double atanh_clamped(double x) {
  x = std::clamp(x, -1.0 + 1e-6, 1.0 - 1e-6);
  return 0.5 * std::log((1.0 + x) / (1.0 - x));
}
}  // namespace

SquashedGaussianPolicy::SquashedGaussianPolicy(int state_dim, int action_dim,
                                               const std::vector<int>& hidden,
                                               std::vector<double> action_low,
                                               std::vector<double> action_high,
                                               Rng& init_rng)
    : state_dim_(state_dim),
      action_dim_(action_dim),
      net_(state_dim, hidden, 2 * action_dim) {
  net_.init(init_rng);
  mid_.resize(action_dim);
  half_.resize(action_dim);
  for (int i = 0; i < action_dim; ++i) {
    mid_[i] = 0.5 * (action_low[i] + action_high[i]);
    half_[i] = 0.5 * (action_high[i] - action_low[i]);
  }
}

SquashedGaussianPolicy::Sample SquashedGaussianPolicy::sample(
    const double* S, int batch, Rng& rng, bool deterministic) const {
  const size_t n = static_cast<size_t>(batch) * action_dim_;
  std::vector<double> eps(n, 0.0);
  if (!deterministic) rng.fill_normal(eps.data(), static_cast<int>(n));
  return sample_given(S, batch, eps.data());
}

SquashedGaussianPolicy::Sample SquashedGaussianPolicy::sample_given(
    const double* S, int batch, const double* eps) const {
  Sample ps;
  ps.batch = batch;
  ps.d = action_dim_;
  const double* out = net_.forward(S, batch, ps.cache);
  ps.hb = make_head_batch(out, batch, action_dim_);
  const size_t n = static_cast<size_t>(batch) * action_dim_;
  ps.eps.assign(eps, eps + n);
  ps.u.resize(n);
  ps.tanh_u.resize(n);
  ps.actions.resize(n);
  ps.logp.assign(batch, 0.0);
  for (int r = 0; r < batch; ++r) {
    const double* mu = ps.hb.mean_row(r);
    const double* lv = ps.hb.lv_row(r);
    for (int i = 0; i < action_dim_; ++i) {
      const size_t k = static_cast<size_t>(r) * action_dim_ + i;
      const double sigma = std::exp(0.5 * lv[i]);
      ps.u[k] = mu[i] + sigma * ps.eps[k];
      ps.tanh_u[k] = std::tanh(ps.u[k]);
      ps.actions[k] = mid_[i] + half_[i] * ps.tanh_u[k];
      ps.logp[r] += -0.5 * kLog2Pi - 0.5 * lv[i] - 0.5 * ps.eps[k] * ps.eps[k] -
                    std::log(half_[i]) - log1m_tanh2(ps.u[k]);
    }
  }
  return ps;
}

void SquashedGaussianPolicy::backprop_sample(const Sample& ps,
                                             const double* dL_da,
                                             const double* dL_dlogp,
                                             double* grad, double* dS) const {
  const int batch = ps.batch;
  const int d = ps.d;
  std::vector<double> dmean(static_cast<size_t>(batch) * d, 0.0);
  std::vector<double> dlv(static_cast<size_t>(batch) * d, 0.0);
  for (int r = 0; r < batch; ++r) {
    const double* lv = ps.hb.lv_row(r);
    for (int i = 0; i < d; ++i) {
      const size_t k = static_cast<size_t>(r) * d + i;
      const double t = ps.tanh_u[k];
      const double sigma = std::exp(0.5 * lv[i]);
      const double du_dlv = 0.5 * sigma * ps.eps[k];
      double du = 0.0;
      if (dL_da) {
        const double da_du = half_[i] * (1.0 - t * t);
        du += dL_da[k] * da_du;
      }
      if (dL_dlogp) {
        // d logp / du through the squash correction
        du += dL_dlogp[r] * 2.0 * t;
        // explicit log-sigma dependence
        dlv[k] += dL_dlogp[r] * (-0.5);
      }
      dmean[k] += du;           // du/dmu = 1
      dlv[k] += du * du_dlv;    // du/dlv
    }
  }
  std::vector<double> dY(static_cast<size_t>(batch) * 2 * d);
  head_grads_to_raw(ps.hb, dmean.data(), dlv.data(), dY.data());
  net_.backward(ps.cache, dY.data(), grad, dS);
}

SquashedGaussianPolicy::Eval SquashedGaussianPolicy::log_prob(
    const double* S, const double* A, int batch) const {
  Eval ev;
  ev.batch = batch;
  ev.d = action_dim_;
  const double* out = net_.forward(S, batch, ev.cache);
  ev.hb = make_head_batch(out, batch, action_dim_);
  const size_t n = static_cast<size_t>(batch) * action_dim_;
  ev.u_hat.resize(n);
  ev.logp.assign(batch, 0.0);
  for (int r = 0; r < batch; ++r) {
    const double* mu = ev.hb.mean_row(r);
    const double* lv = ev.hb.lv_row(r);
    for (int i = 0; i < action_dim_; ++i) {
      const size_t k = static_cast<size_t>(r) * action_dim_ + i;
      const double u = atanh_clamped((A[k] - mid_[i]) / half_[i]);
      ev.u_hat[k] = u;
      const double z = (u - mu[i]) * std::exp(-0.5 * lv[i]);
      ev.logp[r] += -0.5 * kLog2Pi - 0.5 * lv[i] - 0.5 * z * z -
                    std::log(half_[i]) - log1m_tanh2(u);
    }
  }
  return ev;
}

void SquashedGaussianPolicy::backprop_log_prob(const Eval& ev,
                                               const double* dL_dlogp,
                                               double* grad) const {
  const int batch = ev.batch;
  const int d = ev.d;
  std::vector<double> dmean(static_cast<size_t>(batch) * d);
  std::vector<double> dlv(static_cast<size_t>(batch) * d);
  for (int r = 0; r < batch; ++r) {
    const double* mu = ev.hb.mean_row(r);
    const double* lv = ev.hb.lv_row(r);
    for (int i = 0; i < d; ++i) {
      const size_t k = static_cast<size_t>(r) * d + i;
      const double inv_var = std::exp(-lv[i]);
      const double diff = ev.u_hat[k] - mu[i];
      // d logp / d mu and / d lv with the action held fixed
      dmean[k] = dL_dlogp[r] * diff * inv_var;
      dlv[k] = dL_dlogp[r] * (-0.5 + 0.5 * diff * diff * inv_var);
    }
  }
  std::vector<double> dY(static_cast<size_t>(batch) * 2 * d);
  head_grads_to_raw(ev.hb, dmean.data(), dlv.data(), dY.data());
  net_.backward(ev.cache, dY.data(), grad, nullptr);
}

std::vector<double> SquashedGaussianPolicy::act(
    const std::vector<double>& state, bool deterministic, Rng& rng) const {
  Sample ps = sample(state.data(), 1, rng, deterministic);
  return std::vector<double>(ps.actions.begin(), ps.actions.end());
}

PolicySampler SquashedGaussianPolicy::sampler(Rng& rng) const {
  (void)rng;
  return [this](const double* S, int rows, double* A, Rng& r) {
    Sample ps = sample(S, rows, r, false);
    std::memcpy(A, ps.actions.data(), sizeof(double) * ps.actions.size());
  };
}

SacAgent::SacAgent(const EnvSpec& spec, const SacConfig& cfg, Rng& init_rng)
    : cfg_(cfg),
      state_dim_(spec.state_dim),
      action_dim_(spec.action_dim),
      policy_(spec.state_dim, spec.action_dim, cfg.hidden, spec.action_low,
              spec.action_high, init_rng),
      q1_(spec.state_dim + spec.action_dim, cfg.hidden, 1),
      q2_(spec.state_dim + spec.action_dim, cfg.hidden, 1),
      v_(spec.state_dim, cfg.hidden, 1),
      policy_opt_(cfg.lr_policy),
      q1_opt_(cfg.lr_critic),
      q2_opt_(cfg.lr_critic),
      v_opt_(cfg.lr_critic),
      alpha_opt_(cfg.lr_policy) {
  if (cfg_.target_entropy == 0.0)
    cfg_.target_entropy = -static_cast<double>(spec.action_dim);
  q1_.init(init_rng);
  q2_.init(init_rng);
  v_.init(init_rng);
  v_target_ = v_;
}

SacLosses SacAgent::sac_update(const std::vector<Transition>& batch,
                               Rng& rng) {
  const int n = static_cast<int>(batch.size());
  const int sd = state_dim_, ad = action_dim_;
  SacLosses out;

  std::vector<double> S(static_cast<size_t>(n) * sd);
  std::vector<double> S2(static_cast<size_t>(n) * sd);
  std::vector<double> SA(static_cast<size_t>(n) * (sd + ad));
  std::vector<double> R(n), Done(n);
  for (int i = 0; i < n; ++i) {
    std::memcpy(S.data() + static_cast<size_t>(i) * sd, batch[i].state.data(),
                sizeof(double) * sd);
    std::memcpy(S2.data() + static_cast<size_t>(i) * sd,
                batch[i].next_state.data(), sizeof(double) * sd);
    std::memcpy(SA.data() + static_cast<size_t>(i) * (sd + ad),
                batch[i].state.data(), sizeof(double) * sd);
    std::memcpy(SA.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                batch[i].action.data(), sizeof(double) * ad);
    R[i] = batch[i].reward;
    Done[i] = batch[i].done ? 1.0 : 0.0;
  }

  const double a_temp = alpha();
  out.alpha = a_temp;

  // Q targets from the slow-moving V network: r + gamma (1-done) V'(s')
  MlpCache vt_cache;
  const double* vt = v_target_.forward(S2.data(), n, vt_cache);
  std::vector<double> y_q(n);
  for (int i = 0; i < n; ++i)
    y_q[i] = R[i] + cfg_.gamma * (1.0 - Done[i]) * vt[i];

  std::vector<double> grad;
  for (Mlp* q : {&q1_, &q2_}) {
    MlpCache qc;
    const double* qv = q->forward(SA.data(), n, qc);
    std::vector<double> dq(n);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double diff = qv[i] - y_q[i];
      loss += 0.5 * diff * diff;
      dq[i] = diff / n;
    }
    loss /= n;
    grad.assign(q->layout.n_params, 0.0);
    q->backward(qc, dq.data(), grad.data(), nullptr);
    if (q == &q1_) {
      q1_opt_.step(q->params, grad);
      out.q1 = loss;
    } else {
      q2_opt_.step(q->params, grad);
      out.q2 = loss;
    }
  }

  // fresh reparameterized actions for the V and policy objectives
  SquashedGaussianPolicy::Sample ps = policy_.sample(S.data(), n, rng, false);
  std::vector<double> SA2(static_cast<size_t>(n) * (sd + ad));
  for (int i = 0; i < n; ++i) {
    std::memcpy(SA2.data() + static_cast<size_t>(i) * (sd + ad),
                S.data() + static_cast<size_t>(i) * sd, sizeof(double) * sd);
    std::memcpy(SA2.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                ps.actions.data() + static_cast<size_t>(i) * ad,
                sizeof(double) * ad);
  }
  MlpCache q1c, q2c;
  const double* q1v = q1_.forward(SA2.data(), n, q1c);
  const double* q2v = q2_.forward(SA2.data(), n, q2c);
  std::vector<double> qmin(n);
  std::vector<int> which(n);
  for (int i = 0; i < n; ++i) {
    which[i] = q1v[i] <= q2v[i] ? 0 : 1;
    qmin[i] = which[i] == 0 ? q1v[i] : q2v[i];
  }

  // V regression toward E[min Q - alpha log pi]
  {
    MlpCache vc;
    const double* vv = v_.forward(S.data(), n, vc);
    std::vector<double> dv(n);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double target = qmin[i] - a_temp * ps.logp[i];
      const double diff = vv[i] - target;
      loss += 0.5 * diff * diff;
      dv[i] = diff / n;
    }
    out.v = loss / n;
    grad.assign(v_.layout.n_params, 0.0);
    v_.backward(vc, dv.data(), grad.data(), nullptr);
    v_opt_.step(v_.params, grad);
  }

  // policy objective: mean(alpha log pi - min Q) over reparameterized draws
  {
    double loss = 0.0, sum_logp = 0.0;
    for (int i = 0; i < n; ++i) {
      loss += a_temp * ps.logp[i] - qmin[i];
      sum_logp += ps.logp[i];
    }
    out.actor = loss / n;
    out.mean_logp = sum_logp / n;

    // dQmin/da through the argmin member, parameters frozen
    std::vector<double> d1(n, 0.0), d2(n, 0.0);
    for (int i = 0; i < n; ++i)
      (which[i] == 0 ? d1[i] : d2[i]) = -1.0 / n;
    std::vector<double> dX1(static_cast<size_t>(n) * (sd + ad));
    std::vector<double> dX2(static_cast<size_t>(n) * (sd + ad));
    q1_.backward(q1c, d1.data(), nullptr, dX1.data());
    q2_.backward(q2c, d2.data(), nullptr, dX2.data());
    std::vector<double> dL_da(static_cast<size_t>(n) * ad);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < ad; ++j)
        dL_da[static_cast<size_t>(i) * ad + j] =
            dX1[static_cast<size_t>(i) * (sd + ad) + sd + j] +
            dX2[static_cast<size_t>(i) * (sd + ad) + sd + j];
    std::vector<double> dlogp(n, a_temp / n);
    grad.assign(policy_.net().layout.n_params, 0.0);
    policy_.backprop_sample(ps, dL_da.data(), dlogp.data(), grad.data(),
                            nullptr);
    policy_opt_.step(policy_.net().params, grad);
  }

  // temperature toward the entropy target
  if (!cfg_.fixed_alpha) {
    double mean_err = 0.0;
    for (int i = 0; i < n; ++i) mean_err += ps.logp[i] + cfg_.target_entropy;
    mean_err /= n;
    std::vector<double> la = {log_alpha_};
    std::vector<double> g = {-std::exp(log_alpha_) * mean_err};
    alpha_opt_.step(la, g);
    log_alpha_ = la[0];
  }

  // target-V exponential moving average
  for (size_t i = 0; i < v_.params.size(); ++i)
    v_target_.params[i] =
        (1.0 - cfg_.tau) * v_target_.params[i] + cfg_.tau * v_.params[i];

  return out;
}

double SacAgent::imitation_update(const std::vector<Demo>& batch) {
  const int n = static_cast<int>(batch.size());
  const int sd = state_dim_, ad = action_dim_;
  std::vector<double> S(static_cast<size_t>(n) * sd);
  std::vector<double> A(static_cast<size_t>(n) * ad);
  for (int i = 0; i < n; ++i) {
    std::memcpy(S.data() + static_cast<size_t>(i) * sd, batch[i].state.data(),
                sizeof(double) * sd);
    std::memcpy(A.data() + static_cast<size_t>(i) * ad, batch[i].action.data(),
                sizeof(double) * ad);
  }
  SquashedGaussianPolicy::Eval ev = policy_.log_prob(S.data(), A.data(), n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) loss -= ev.logp[i];
  loss /= n;
  std::vector<double> dlogp(n, -1.0 / n);
  std::vector<double> grad(policy_.net().layout.n_params, 0.0);
  policy_.backprop_log_prob(ev, dlogp.data(), grad.data());
  policy_opt_.step(policy_.net().params, grad);
  return loss;
}

double SacAgent::estimate_value(const std::vector<double>& state) const {
  double out = 0.0;
  estimate_values(state.data(), 1, &out);
  return out;
}

void SacAgent::estimate_values(const double* S, int rows, double* out) const {
  MlpCache c;
  const double* vv = v_.forward(S, rows, c);
  std::memcpy(out, vv, sizeof(double) * rows);
}

}  // namespace bifrl
