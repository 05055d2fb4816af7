#include "bifrl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace bifrl {

double discrepancy_bound(const BoundInputs& in) {
  if (in.gamma >= 1.0 || in.gamma < 0.0)
    throw std::invalid_argument("discrepancy_bound: gamma must be in [0,1)");
  if (in.r_max < 0.0 || in.k_b < 0 || in.eps_pi < 0.0 || in.eps_pi > 1.0 ||
      in.eps_m < 0.0 || in.eps_m > 1.0)
    throw std::invalid_argument("discrepancy_bound: inputs out of range");
  const double horizon =
      (1.0 - std::pow(in.gamma, in.k_b + 1)) / (1.0 - in.gamma);
  return 2.0 * in.r_max * horizon *
         (in.eps_pi + in.k_b * (in.eps_pi + in.eps_m));
}

namespace {

// state occupancies d_0..d_k under (pi, P)
std::vector<std::vector<double>> state_occupancies(
    const TabularMDP& mdp, const std::vector<double>& P,
    const std::vector<double>& pi, int k) {
  const int S = mdp.n_states, A = mdp.n_actions;
  std::vector<std::vector<double>> d(k + 1, std::vector<double>(S, 0.0));
  d[0] = mdp.rho0;
  for (int t = 0; t < k; ++t)
    for (int s = 0; s < S; ++s) {
      const double ds = d[t][s];
      if (ds == 0.0) continue;
      for (int a = 0; a < A; ++a) {
        const double w = ds * pi[s * A + a];
        if (w == 0.0) continue;
        const double* row = P.data() + (static_cast<size_t>(s) * A + a) * S;
        for (int s2 = 0; s2 < S; ++s2) d[t + 1][s2] += w * row[s2];
      }
    }
  return d;
}

double tv(const double* p, const double* q, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace

Divergences exact_divergences(const TabularMDP& mdp,
                              const std::vector<double>& p_e,
                              const std::vector<double>& pi,
                              const std::vector<double>& pi_e, int k_b) {
  const int S = mdp.n_states, A = mdp.n_actions;
  // per-state policy TV and per-(s,a) model TV, both time-invariant
  std::vector<double> pol_tv(S);
  for (int s = 0; s < S; ++s)
    pol_tv[s] = tv(pi_e.data() + s * A, pi.data() + s * A, A);
  std::vector<double> mod_tv(static_cast<size_t>(S) * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      mod_tv[static_cast<size_t>(s) * A + a] =
          tv(p_e.data() + (static_cast<size_t>(s) * A + a) * S,
             mdp.P.data() + (static_cast<size_t>(s) * A + a) * S, S);

  // eps_pi: expectation under the (pi, p) occupancy
  const auto d_real = state_occupancies(mdp, mdp.P, pi, k_b);
  // eps_m: expectation under the (pi, p_e) occupancy
  const auto d_model = state_occupancies(mdp, p_e, pi, k_b);

  Divergences out;
  for (int t = 0; t <= k_b; ++t) {
    double e_pi = 0.0, e_m = 0.0;
    for (int s = 0; s < S; ++s) {
      e_pi += d_real[t][s] * pol_tv[s];
      for (int a = 0; a < A; ++a)
        e_m += d_model[t][s] * pi[s * A + a] *
               mod_tv[static_cast<size_t>(s) * A + a];
    }
    out.eps_pi = std::max(out.eps_pi, e_pi);
    out.eps_m = std::max(out.eps_m, e_m);
  }
  return out;
}

double truncated_return(const TabularMDP& mdp, const std::vector<double>& P,
                        const std::vector<double>& pi, int k_b) {
  const int S = mdp.n_states, A = mdp.n_actions;
  const auto d = state_occupancies(mdp, P, pi, k_b);
  double eta = 0.0;
  double disc = 1.0;
  for (int t = 0; t <= k_b; ++t) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        eta += disc * d[t][s] * pi[s * A + a] * mdp.reward(s, a);
    disc *= mdp.gamma;
  }
  return eta;
}

namespace {

std::vector<double> random_distribution(int n, Rng& rng) {
  std::vector<double> w(n);
  double tot = 0.0;
  for (auto& v : w) {
    v = -std::log(1.0 - rng.uniform01());
    tot += v;
  }
  for (auto& v : w) v /= tot;
  return w;
}

std::vector<double> random_policy(int S, int A, Rng& rng) {
  std::vector<double> pi(static_cast<size_t>(S) * A);
  for (int s = 0; s < S; ++s) {
    auto row = random_distribution(A, rng);
    std::copy(row.begin(), row.end(), pi.begin() + static_cast<size_t>(s) * A);
  }
  return pi;
}

std::vector<double> random_kernel(int S, int A, Rng& rng) {
  std::vector<double> P(static_cast<size_t>(S) * A * S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      auto row = random_distribution(S, rng);
      std::copy(row.begin(), row.end(),
                P.begin() + (static_cast<size_t>(s) * A + a) * S);
    }
  return P;
}

// convex mixture toward a random target: TV magnitude controlled by w
std::vector<double> perturb_rows(const std::vector<double>& base,
                                 const std::vector<double>& target, double w) {
  std::vector<double> out(base.size());
  for (size_t i = 0; i < base.size(); ++i)
    out[i] = (1.0 - w) * base[i] + w * target[i];
  return out;
}

}  // namespace

BoundValidationReport validate_bound(Rng& rng, int n_instances,
                                     const std::vector<int>& k_b_choices) {
  if (n_instances < 1)
    throw std::invalid_argument("validate_bound: need at least one instance");
  BoundValidationReport rep;
  rep.instances = n_instances;
  double worst_margin = 1e300;

  for (int inst = 0; inst < n_instances; ++inst) {
    const int S = 2 + rng.uniform_int(5);   // up to 6 states
    const int A = 2 + rng.uniform_int(2);   // up to 3 actions
    TabularMDP mdp;
    mdp.n_states = S;
    mdp.n_actions = A;
    mdp.gamma = rng.uniform(0.5, 0.99);
    mdp.P = random_kernel(S, A, rng);
    mdp.r.resize(static_cast<size_t>(S) * A);
    for (auto& v : mdp.r) v = rng.uniform(-1.0, 1.0);
    mdp.rho0 = random_distribution(S, rng);
    mdp.validate();

    const auto pi = random_policy(S, A, rng);
    const double w_pi = rng.uniform(0.0, 0.6);
    const double w_m = rng.uniform(0.0, 0.6);
    const auto pi_e = perturb_rows(pi, random_policy(S, A, rng), w_pi);
    const auto p_e = perturb_rows(mdp.P, random_kernel(S, A, rng), w_m);

    const int k_b = k_b_choices[rng.uniform_int(
        static_cast<int>(k_b_choices.size()))];

    const double eta = truncated_return(mdp, mdp.P, pi, k_b);
    const double eta_e = truncated_return(mdp, p_e, pi_e, k_b);
    const Divergences div = exact_divergences(mdp, p_e, pi, pi_e, k_b);
    const double bound = discrepancy_bound(
        {mdp.r_max(), mdp.gamma, k_b, div.eps_pi, div.eps_m});
    const double disc = std::abs(eta - eta_e);
    const double margin = bound - disc;

    rep.margins.push_back(margin);
    rep.bounds.push_back(bound);
    rep.discrepancies.push_back(disc);
    if (disc > bound + 1e-9) {
      ++rep.violations;
      if (margin < worst_margin) {
        std::ostringstream os;
        os << "instance " << inst << ": S=" << S << " A=" << A
           << " gamma=" << mdp.gamma << " k_b=" << k_b << " eta=" << eta
           << " eta_e=" << eta_e << " eps_pi=" << div.eps_pi
           << " eps_m=" << div.eps_m << " bound=" << bound;
        rep.worst_case = os.str();
      }
    }
    worst_margin = std::min(worst_margin, margin);
  }

  std::vector<double> sorted = rep.margins;
  std::sort(sorted.begin(), sorted.end());
  rep.median_margin = sorted[sorted.size() / 2];
  return rep;
}

DivergenceReport measure_divergences(const std::vector<Transition>& holdout,
                                     const BackwardPolicy* bp,
                                     const Ensemble* forward_ens,
                                     const Ensemble* backward_ens,
                                     size_t min_samples) {
  DivergenceReport rep;
  if (holdout.size() < min_samples) return rep;
  const int n = static_cast<int>(holdout.size());
  const int sd = static_cast<int>(holdout[0].state.size());
  const int ad = static_cast<int>(holdout[0].action.size());

  std::vector<double> X_fwd(static_cast<size_t>(n) * (sd + ad));
  std::vector<double> X_bwd(static_cast<size_t>(n) * (sd + ad));
  std::vector<double> S2(static_cast<size_t>(n) * sd);
  for (int i = 0; i < n; ++i) {
    const auto& t = holdout[i];
    std::memcpy(X_fwd.data() + static_cast<size_t>(i) * (sd + ad),
                t.state.data(), sizeof(double) * sd);
    std::memcpy(X_fwd.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                t.action.data(), sizeof(double) * ad);
    std::memcpy(X_bwd.data() + static_cast<size_t>(i) * (sd + ad),
                t.next_state.data(), sizeof(double) * sd);
    std::memcpy(X_bwd.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                t.action.data(), sizeof(double) * ad);
    std::memcpy(S2.data() + static_cast<size_t>(i) * sd, t.next_state.data(),
                sizeof(double) * sd);
  }

  std::vector<double> delta(static_cast<size_t>(n) * sd);
  std::vector<double> reward(n);
  if (forward_ens && forward_ens->trained()) {
    forward_ens->mean_prediction(X_fwd.data(), n, delta.data(), reward.data());
    double mse = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < sd; ++j) {
        const double truth = holdout[i].next_state[j] - holdout[i].state[j];
        const double diff = delta[static_cast<size_t>(i) * sd + j] - truth;
        mse += diff * diff;
      }
    rep.forward_model_mse = mse / (static_cast<double>(n) * sd);
  }
  if (backward_ens && backward_ens->trained()) {
    backward_ens->mean_prediction(X_bwd.data(), n, delta.data(),
                                  reward.data());
    double mse = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < sd; ++j) {
        const double truth = holdout[i].state[j] - holdout[i].next_state[j];
        const double diff = delta[static_cast<size_t>(i) * sd + j] - truth;
        mse += diff * diff;
      }
    rep.backward_model_mse = mse / (static_cast<double>(n) * sd);
  }
  if (bp && bp->trained()) {
    std::vector<double> A(static_cast<size_t>(n) * ad);
    bp->mean_actions(S2.data(), n, A.data());
    double mse = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < ad; ++j) {
        const double diff =
            A[static_cast<size_t>(i) * ad + j] - holdout[i].action[j];
        mse += diff * diff;
      }
    rep.policy_divergence_mse = mse / (static_cast<double>(n) * ad);
  }
  rep.valid = true;
  return rep;
}

}  // namespace bifrl
