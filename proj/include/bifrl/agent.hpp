#ifndef BIFRL_AGENT_HPP
#define BIFRL_AGENT_HPP

// Policy and critics with both learning signals: behavior cloning on
// backward-rollout demonstrations and soft actor-critic with an explicit
// state-value network (the V-based SAC formulation; the value estimates
// feed state prioritization and the GAN regularizer).

#include <vector>

#include "bifrl/buffers.hpp"
#include "bifrl/dynamics.hpp"
#include "bifrl/envs.hpp"
#include "bifrl/net.hpp"
#include "bifrl/rng.hpp"

namespace bifrl {

// tanh-squashed diagonal Gaussian over actions, scaled to bounds.
class SquashedGaussianPolicy {
 public:
  SquashedGaussianPolicy() = default;
  SquashedGaussianPolicy(int state_dim, int action_dim,
                         const std::vector<int>& hidden,
                         std::vector<double> action_low,
                         std::vector<double> action_high, Rng& init_rng);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

  // Everything needed to backprop through a reparameterized batch draw.
  struct Sample {
    int batch = 0;
    int d = 0;
    MlpCache cache;
    HeadBatch hb;
    std::vector<double> eps;     // standard normal draws, 0 in det mode
    std::vector<double> u;       // pre-squash
    std::vector<double> tanh_u;
    std::vector<double> actions; // squashed + scaled
    std::vector<double> logp;    // log-density incl. squash correction
  };

  Sample sample(const double* S, int batch, Rng& rng,
                bool deterministic = false) const;

  // Same draw with caller-provided standard-normal noise; lets tests pin
  // the reparameterization when finite-differencing through the sampler.
  Sample sample_given(const double* S, int batch, const double* eps) const;

  // Chain rule from dL/da [batch x d] and dL/dlogp [batch] (either may
  // be null) into parameter gradients and optionally input gradients.
  void backprop_sample(const Sample& ps, const double* dL_da,
                       const double* dL_dlogp, double* grad,
                       double* dS) const;

  // Log-density of given (already squashed and scaled) actions.
  struct Eval {
    int batch = 0;
    int d = 0;
    MlpCache cache;
    HeadBatch hb;
    std::vector<double> u_hat;  // atanh of the unscaled actions
    std::vector<double> logp;
  };
  Eval log_prob(const double* S, const double* A, int batch) const;
  void backprop_log_prob(const Eval& ev, const double* dL_dlogp,
                         double* grad) const;

  std::vector<double> act(const std::vector<double>& state,
                          bool deterministic, Rng& rng) const;

  // Stochastic batch sampler for model rollouts.
  PolicySampler sampler(Rng& rng) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  const std::vector<double>& mid() const { return mid_; }
  const std::vector<double>& half() const { return half_; }

 private:
  int state_dim_ = 0;
  int action_dim_ = 0;
  Mlp net_;
  std::vector<double> mid_, half_;
};

struct SacConfig {
  double lr_policy = 3e-4;
  double lr_critic = 3e-4;
  double gamma = 0.99;
  double tau = 0.005;            // target-V EMA rate
  double target_entropy = 0.0;   // set to -action_dim by default
  bool fixed_alpha = false;
  double alpha_value = 0.2;      // used only when fixed_alpha
  std::vector<int> hidden = {64, 64};
};

struct SacLosses {
  double actor = 0.0;
  double q1 = 0.0;
  double q2 = 0.0;
  double v = 0.0;
  double alpha = 0.0;      // current entropy temperature
  double mean_logp = 0.0;
};

class SacAgent {
 public:
  SacAgent() = default;
  SacAgent(const EnvSpec& spec, const SacConfig& cfg, Rng& init_rng);

  const SquashedGaussianPolicy& policy() const { return policy_; }
  SquashedGaussianPolicy& policy() { return policy_; }

  std::vector<double> act(const std::vector<double>& state,
                          bool deterministic, Rng& rng) const {
    return policy_.act(state, deterministic, rng);
  }

  // One gradient step of each SAC piece on a uniform batch.
  SacLosses sac_update(const std::vector<Transition>& batch, Rng& rng);

  // One behavior-cloning step on demonstration pairs; returns the loss
  // (mean negative log-density).
  double imitation_update(const std::vector<Demo>& batch);

  double estimate_value(const std::vector<double>& state) const;
  void estimate_values(const double* S, int rows, double* out) const;

  double alpha() const {
    return cfg_.fixed_alpha ? cfg_.alpha_value : std::exp(log_alpha_);
  }
  double log_alpha() const { return log_alpha_; }

  Mlp& q1() { return q1_; }
  Mlp& q2() { return q2_; }
  Mlp& v() { return v_; }
  Mlp& v_target() { return v_target_; }
  Adam& policy_opt() { return policy_opt_; }
  Adam& q1_opt() { return q1_opt_; }
  Adam& q2_opt() { return q2_opt_; }
  Adam& v_opt() { return v_opt_; }
  Adam& alpha_opt() { return alpha_opt_; }
  void set_log_alpha(double v) { log_alpha_ = v; }
  const SacConfig& config() const { return cfg_; }

 private:
  SacConfig cfg_;
  int state_dim_ = 0;
  int action_dim_ = 0;
  SquashedGaussianPolicy policy_;
  Mlp q1_, q2_, v_, v_target_;
  Adam policy_opt_{3e-4}, q1_opt_{3e-4}, q2_opt_{3e-4}, v_opt_{3e-4},
      alpha_opt_{3e-4};
  double log_alpha_ = 0.0;
};

}  // namespace bifrl

#endif
