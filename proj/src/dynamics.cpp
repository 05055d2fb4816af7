#include "bifrl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace bifrl {

void Normalizer::fit(const double* X, int rows, int cols) {
  mean.assign(cols, 0.0);
  inv_std.assign(cols, 1.0);
  if (rows == 0) return;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      mean[c] += X[static_cast<size_t>(r) * cols + c];
  for (int c = 0; c < cols; ++c) mean[c] /= rows;
  std::vector<double> var(cols, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double d = X[static_cast<size_t>(r) * cols + c] - mean[c];
      var[c] += d * d;
    }
  for (int c = 0; c < cols; ++c) {
    const double sd = std::sqrt(var[c] / rows);
    inv_std[c] = sd > 1e-8 ? 1.0 / sd : 1.0;
  }
}

void Normalizer::apply(double* X, int rows) const {
  const int cols = static_cast<int>(mean.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double& v = X[static_cast<size_t>(r) * cols + c];
      v = (v - mean[c]) * inv_std[c];
    }
}

double gaussian_net_nll(const Mlp& net, const double* X, const double* Y,
                        int rows) {
  const int d = net.layout.out / 2;
  MlpCache c;
  const double* out = net.forward(X, rows, c);
  HeadBatch hb = make_head_batch(out, rows, d);
  double total = 0.0;
  for (int r = 0; r < rows; ++r)
    total += gaussian_nll(hb.mean_row(r), hb.lv_row(r),
                          Y + static_cast<size_t>(r) * d, d);
  return total / rows;
}

std::vector<double> train_gaussian_net(Mlp& net, Adam& opt, const double* X,
                                       const double* Y, int rows, int in_dim,
                                       int out_dim,
                                       const std::vector<int>* bootstrap,
                                       const std::vector<int>& holdout,
                                       const std::vector<int>& train_idx,
                                       const ModelTrainOpts& opts, Rng& rng,
                                       double* best_val) {
  (void)rows;
  const int d = out_dim;
  const std::vector<int>& pool = bootstrap ? *bootstrap : train_idx;
  const int n_pool = static_cast<int>(pool.size());
  const int n_hold = static_cast<int>(holdout.size());

  std::vector<double> hx(static_cast<size_t>(n_hold) * in_dim);
  std::vector<double> hy(static_cast<size_t>(n_hold) * d);
  for (int i = 0; i < n_hold; ++i) {
    std::memcpy(hx.data() + static_cast<size_t>(i) * in_dim,
                X + static_cast<size_t>(holdout[i]) * in_dim,
                sizeof(double) * in_dim);
    std::memcpy(hy.data() + static_cast<size_t>(i) * d,
                Y + static_cast<size_t>(holdout[i]) * d, sizeof(double) * d);
  }

  std::vector<double> history;
  std::vector<double> best_params = net.params;
  double best = gaussian_net_nll(net, hx.data(), hy.data(), n_hold);
  history.push_back(best);
  int bad_evals = 0;

  const int bs = std::min(opts.batch_size, n_pool);
  std::vector<double> bx(static_cast<size_t>(bs) * in_dim);
  std::vector<double> by(static_cast<size_t>(bs) * d);
  std::vector<double> dmean(static_cast<size_t>(bs) * d);
  std::vector<double> dlv(static_cast<size_t>(bs) * d);
  std::vector<double> dY(static_cast<size_t>(bs) * 2 * d);
  std::vector<double> grad(net.layout.n_params);
  MlpCache cache;

  for (int step = 1; step <= opts.max_batches; ++step) {
    for (int i = 0; i < bs; ++i) {
      const int idx = pool[rng.uniform_int(n_pool)];
      std::memcpy(bx.data() + static_cast<size_t>(i) * in_dim,
                  X + static_cast<size_t>(idx) * in_dim,
                  sizeof(double) * in_dim);
      std::memcpy(by.data() + static_cast<size_t>(i) * d,
                  Y + static_cast<size_t>(idx) * d, sizeof(double) * d);
    }
    const double* out = net.forward(bx.data(), bs, cache);
    HeadBatch hb = make_head_batch(out, bs, d);
    for (int r = 0; r < bs; ++r) {
      gaussian_nll_grad(hb.mean_row(r), hb.lv_row(r),
                        by.data() + static_cast<size_t>(r) * d, d,
                        dmean.data() + static_cast<size_t>(r) * d,
                        dlv.data() + static_cast<size_t>(r) * d);
    }
    const double scale = 1.0 / bs;
    for (auto& v : dmean) v *= scale;
    for (auto& v : dlv) v *= scale;
    head_grads_to_raw(hb, dmean.data(), dlv.data(), dY.data());
    std::fill(grad.begin(), grad.end(), 0.0);
    net.backward(cache, dY.data(), grad.data(), nullptr);
    opt.step(net.params, grad);

    if (step % opts.eval_every == 0 || step == opts.max_batches) {
      const double val = gaussian_net_nll(net, hx.data(), hy.data(), n_hold);
      history.push_back(val);
      if (val < best - 1e-6) {
        best = val;
        best_params = net.params;
        bad_evals = 0;
      } else if (++bad_evals >= opts.patience) {
        break;
      }
    }
  }
  net.params = best_params;
  if (best_val) *best_val = best;
  return history;
}

namespace {

// Deterministic holdout/train split over [0, rows).
void split_indices(int rows, double holdout_fraction, int max_holdout,
                   Rng& rng, std::vector<int>& holdout,
                   std::vector<int>& train) {
  std::vector<int> perm(rows);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = rows - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
  const int n_hold = std::min(
      max_holdout,
      std::max(1, static_cast<int>(std::lround(holdout_fraction * rows))));
  holdout.assign(perm.begin(), perm.begin() + n_hold);
  train.assign(perm.begin() + n_hold, perm.end());
}

}  // namespace

Ensemble::Ensemble(Direction dir, int state_dim, int action_dim,
                   const std::vector<int>& hidden, int n_members, double lr,
                   Rng& init_rng)
    : dir_(dir), state_dim_(state_dim), action_dim_(action_dim) {
  if (n_members < 2)
    throw std::invalid_argument("ensemble needs >= 2 members");
  for (int i = 0; i < n_members; ++i) {
    members_.emplace_back(input_dim(), hidden, 2 * head_dim());
    members_.back().init(init_rng);
    opts_.emplace_back(lr);
  }
}

ModelTrainReport Ensemble::train(const double* X, const double* Y, int rows,
                                 const ModelTrainOpts& opts, Rng& rng) {
  ModelTrainReport rep;
  if (rows < opts.min_samples) return rep;  // caller logs the skip

  norm_.fit(X, rows, input_dim());
  std::vector<double> Xn(X, X + static_cast<size_t>(rows) * input_dim());
  norm_.apply(Xn.data(), rows);

  std::vector<int> holdout, train_idx;
  split_indices(rows, opts.holdout_fraction, opts.max_holdout, rng, holdout,
                train_idx);

  double val_sum = 0.0;
  for (size_t m = 0; m < members_.size(); ++m) {
    Rng member_rng = rng.derive(1000 + m);
    std::vector<int> boot(train_idx.size());
    for (auto& v : boot)
      v = train_idx[member_rng.uniform_int(
          static_cast<int>(train_idx.size()))];
    double best = 0.0;
    rep.val_history.push_back(train_gaussian_net(
        members_[m], opts_[m], Xn.data(), Y, rows, input_dim(), head_dim(),
        &boot, holdout, train_idx, opts, member_rng, &best));
    val_sum += best;
  }
  rep.trained = true;
  rep.val_loss = val_sum / members_.size();
  trained_ = true;
  return rep;
}

void Ensemble::predict(const double* X, int rows, Rng& rng, double* delta,
                       double* reward) const {
  if (!trained_) throw std::logic_error("predict on untrained ensemble");
  const int in = input_dim();
  const int d = head_dim();
  std::vector<double> Xn(X, X + static_cast<size_t>(rows) * in);
  norm_.apply(Xn.data(), rows);

  // evaluate every member on the whole batch, then gather per-row draws
  std::vector<MlpCache> caches(members_.size());
  std::vector<const double*> outs(members_.size());
  for (size_t m = 0; m < members_.size(); ++m)
    outs[m] = members_[m].forward(Xn.data(), rows, caches[m]);

  for (int r = 0; r < rows; ++r) {
    const int m = rng.uniform_int(size());
    const double* row = outs[m] + static_cast<size_t>(r) * 2 * d;
    for (int i = 0; i < d; ++i) {
      const double lv = clamp_logvar(row[d + i]);
      const double s = row[i] + std::exp(0.5 * lv) * rng.normal();
      if (i < state_dim_)
        delta[static_cast<size_t>(r) * state_dim_ + i] = s;
      else
        reward[r] = s;
    }
  }
}

void Ensemble::mean_prediction(const double* X, int rows, double* delta,
                               double* reward) const {
  if (!trained_) throw std::logic_error("predict on untrained ensemble");
  const int in = input_dim();
  const int d = head_dim();
  std::vector<double> Xn(X, X + static_cast<size_t>(rows) * in);
  norm_.apply(Xn.data(), rows);
  std::fill(delta, delta + static_cast<size_t>(rows) * state_dim_, 0.0);
  std::fill(reward, reward + rows, 0.0);
  MlpCache cache;
  const double w = 1.0 / size();
  for (const auto& net : members_) {
    const double* out = net.forward(Xn.data(), rows, cache);
    for (int r = 0; r < rows; ++r) {
      const double* row = out + static_cast<size_t>(r) * 2 * d;
      for (int i = 0; i < state_dim_; ++i)
        delta[static_cast<size_t>(r) * state_dim_ + i] += w * row[i];
      reward[r] += w * row[state_dim_];
    }
  }
}

GaussianHead Ensemble::member_head(int m, const std::vector<double>& x) const {
  std::vector<double> xn = x;
  if (norm_.fitted()) norm_.apply(xn.data(), 1);
  return gaussian_forward(members_[m], xn);
}

int Ensemble::pick_member(Rng& rng) const { return rng.uniform_int(size()); }

std::pair<std::vector<double>, double> predict(
    const Ensemble& ens, const std::vector<double>& state,
    const std::vector<double>& action, Rng& rng) {
  std::vector<double> x(state);
  x.insert(x.end(), action.begin(), action.end());
  std::vector<double> delta(ens.state_dim());
  double reward = 0.0;
  ens.predict(x.data(), 1, rng, delta.data(), &reward);
  std::vector<double> out(state);
  for (int i = 0; i < ens.state_dim(); ++i) out[i] += delta[i];
  return {out, reward};
}

BackwardPolicy::BackwardPolicy(int state_dim, int action_dim,
                               const std::vector<int>& hidden, double lr,
                               std::vector<double> action_low,
                               std::vector<double> action_high, Rng& init_rng)
    : state_dim_(state_dim),
      action_dim_(action_dim),
      net_(state_dim, hidden, 2 * action_dim),
      opt_(lr),
      low_(std::move(action_low)),
      high_(std::move(action_high)) {
  net_.init(init_rng);
}

ModelTrainReport BackwardPolicy::train(const double* X, const double* Y,
                                       int rows, const ModelTrainOpts& opts,
                                       Rng& rng) {
  ModelTrainReport rep;
  if (rows < opts.min_samples) return rep;
  norm_.fit(X, rows, state_dim_);
  std::vector<double> Xn(X, X + static_cast<size_t>(rows) * state_dim_);
  norm_.apply(Xn.data(), rows);
  std::vector<int> holdout, train_idx;
  split_indices(rows, opts.holdout_fraction, opts.max_holdout, rng, holdout,
                train_idx);
  double best = 0.0;
  rep.val_history.push_back(
      train_gaussian_net(net_, opt_, Xn.data(), Y, rows, state_dim_,
                         action_dim_, nullptr, holdout, train_idx, opts, rng,
                         &best));
  rep.trained = true;
  rep.val_loss = best;
  trained_ = true;
  return rep;
}

void BackwardPolicy::sample_actions(const double* S, int rows, Rng& rng,
                                    double* A) const {
  std::vector<double> Sn(S, S + static_cast<size_t>(rows) * state_dim_);
  if (norm_.fitted()) norm_.apply(Sn.data(), rows);
  MlpCache c;
  const double* out = net_.forward(Sn.data(), rows, c);
  for (int r = 0; r < rows; ++r) {
    const double* row = out + static_cast<size_t>(r) * 2 * action_dim_;
    for (int i = 0; i < action_dim_; ++i) {
      const double lv = clamp_logvar(row[action_dim_ + i]);
      const double a = row[i] + std::exp(0.5 * lv) * rng.normal();
      A[static_cast<size_t>(r) * action_dim_ + i] =
          std::clamp(a, low_[i], high_[i]);
    }
  }
}

void BackwardPolicy::mean_actions(const double* S, int rows, double* A) const {
  std::vector<double> Sn(S, S + static_cast<size_t>(rows) * state_dim_);
  if (norm_.fitted()) norm_.apply(Sn.data(), rows);
  MlpCache c;
  const double* out = net_.forward(Sn.data(), rows, c);
  for (int r = 0; r < rows; ++r) {
    const double* row = out + static_cast<size_t>(r) * 2 * action_dim_;
    for (int i = 0; i < action_dim_; ++i)
      A[static_cast<size_t>(r) * action_dim_ + i] =
          std::clamp(row[i], low_[i], high_[i]);
  }
}

GaussianHead BackwardPolicy::head(const std::vector<double>& s) const {
  std::vector<double> sn = s;
  if (norm_.fitted()) norm_.apply(sn.data(), 1);
  return gaussian_forward(net_, sn);
}

BackwardRolloutResult backward_rollouts(
    const std::vector<std::vector<double>>& starts, int k_b,
    const BackwardPolicy& bp, const Ensemble& backward_ens, const Env& env,
    Rng& rng) {
  BackwardRolloutResult res;
  if (k_b < 0) throw std::invalid_argument("negative rollout length");
  if (k_b == 0 || starts.empty()) return res;

  const int sd = backward_ens.state_dim();
  const int ad = backward_ens.input_dim() - sd;
  const int n = static_cast<int>(starts.size());

  std::vector<double> cur(static_cast<size_t>(n) * sd);
  for (int i = 0; i < n; ++i)
    std::memcpy(cur.data() + static_cast<size_t>(i) * sd, starts[i].data(),
                sizeof(double) * sd);
  std::vector<int> active(n);
  std::iota(active.begin(), active.end(), 0);

  // per-trace records in generation (reverse-time) order
  std::vector<std::vector<Demo>> demos(n);
  std::vector<std::vector<Transition>> trans(n);

  std::vector<double> S, A, X, delta, reward;
  for (int step = 0; step < k_b && !active.empty(); ++step) {
    const int m = static_cast<int>(active.size());
    S.resize(static_cast<size_t>(m) * sd);
    for (int i = 0; i < m; ++i)
      std::memcpy(S.data() + static_cast<size_t>(i) * sd,
                  cur.data() + static_cast<size_t>(active[i]) * sd,
                  sizeof(double) * sd);
    A.resize(static_cast<size_t>(m) * ad);
    bp.sample_actions(S.data(), m, rng, A.data());

    X.resize(static_cast<size_t>(m) * (sd + ad));
    for (int i = 0; i < m; ++i) {
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad),
                  S.data() + static_cast<size_t>(i) * sd, sizeof(double) * sd);
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                  A.data() + static_cast<size_t>(i) * ad, sizeof(double) * ad);
    }
    delta.resize(static_cast<size_t>(m) * sd);
    reward.resize(m);
    backward_ens.predict(X.data(), m, rng, delta.data(), reward.data());

    std::vector<int> next_active;
    for (int i = 0; i < m; ++i) {
      const int id = active[i];
      std::vector<double> prev(sd);
      for (int j = 0; j < sd; ++j)
        prev[j] = S[static_cast<size_t>(i) * sd + j] +
                  delta[static_cast<size_t>(i) * sd + j];
      if (!all_finite(prev) || !std::isfinite(reward[i])) {
        ++res.nonfinite_truncations;
        continue;
      }
      if (env.termination(prev)) continue;  // crossed an episode boundary

      std::vector<double> act(A.begin() + static_cast<size_t>(i) * ad,
                              A.begin() + static_cast<size_t>(i + 1) * ad);
      std::vector<double> succ(S.begin() + static_cast<size_t>(i) * sd,
                               S.begin() + static_cast<size_t>(i + 1) * sd);
      demos[id].push_back({prev, act});
      Transition tr;
      tr.state = prev;
      tr.action = act;
      tr.reward = reward[i];
      tr.next_state = succ;
      tr.done = env.termination(succ);
      trans[id].push_back(std::move(tr));

      std::memcpy(cur.data() + static_cast<size_t>(id) * sd, prev.data(),
                  sizeof(double) * sd);
      next_active.push_back(id);
    }
    active = std::move(next_active);
  }

  // reverse each trace into forward temporal order
  for (int i = 0; i < n; ++i) {
    for (auto it = demos[i].rbegin(); it != demos[i].rend(); ++it)
      res.demos.push_back(std::move(*it));
    for (auto it = trans[i].rbegin(); it != trans[i].rend(); ++it)
      res.transitions.push_back(std::move(*it));
  }
  return res;
}

ForwardRolloutResult forward_rollouts(
    const std::vector<std::vector<double>>& starts, int k_f,
    const PolicySampler& policy, const Ensemble& forward_ens, const Env& env,
    Rng& rng) {
  ForwardRolloutResult res;
  if (k_f < 0) throw std::invalid_argument("negative rollout length");
  if (k_f == 0 || starts.empty()) return res;

  const int sd = forward_ens.state_dim();
  const int ad = forward_ens.input_dim() - sd;
  const int n = static_cast<int>(starts.size());

  std::vector<double> cur(static_cast<size_t>(n) * sd);
  for (int i = 0; i < n; ++i)
    std::memcpy(cur.data() + static_cast<size_t>(i) * sd, starts[i].data(),
                sizeof(double) * sd);
  std::vector<int> active;
  for (int i = 0; i < n; ++i)
    if (!env.termination(starts[i])) active.push_back(i);

  std::vector<double> S, A, X, delta, reward;
  for (int step = 0; step < k_f && !active.empty(); ++step) {
    const int m = static_cast<int>(active.size());
    S.resize(static_cast<size_t>(m) * sd);
    for (int i = 0; i < m; ++i)
      std::memcpy(S.data() + static_cast<size_t>(i) * sd,
                  cur.data() + static_cast<size_t>(active[i]) * sd,
                  sizeof(double) * sd);
    A.resize(static_cast<size_t>(m) * ad);
    policy(S.data(), m, A.data(), rng);

    X.resize(static_cast<size_t>(m) * (sd + ad));
    for (int i = 0; i < m; ++i) {
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad),
                  S.data() + static_cast<size_t>(i) * sd, sizeof(double) * sd);
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                  A.data() + static_cast<size_t>(i) * ad, sizeof(double) * ad);
    }
    delta.resize(static_cast<size_t>(m) * sd);
    reward.resize(m);
    forward_ens.predict(X.data(), m, rng, delta.data(), reward.data());

    std::vector<int> next_active;
    for (int i = 0; i < m; ++i) {
      const int id = active[i];
      std::vector<double> next(sd);
      for (int j = 0; j < sd; ++j)
        next[j] = S[static_cast<size_t>(i) * sd + j] +
                  delta[static_cast<size_t>(i) * sd + j];
      if (!all_finite(next) || !std::isfinite(reward[i])) {
        ++res.nonfinite_truncations;
        continue;
      }
      Transition tr;
      tr.state.assign(S.begin() + static_cast<size_t>(i) * sd,
                      S.begin() + static_cast<size_t>(i + 1) * sd);
      tr.action.assign(A.begin() + static_cast<size_t>(i) * ad,
                       A.begin() + static_cast<size_t>(i + 1) * ad);
      tr.reward = reward[i];
      tr.done = env.termination(next);
      tr.next_state = next;
      const bool done = tr.done;
      res.transitions.push_back(std::move(tr));
      if (!done) {
        std::memcpy(cur.data() + static_cast<size_t>(id) * sd, next.data(),
                    sizeof(double) * sd);
        next_active.push_back(id);
      }
    }
    active = std::move(next_active);
  }
  return res;
}

}  // namespace bifrl
