#ifndef BIFRL_ENVS_HPP
#define BIFRL_ENVS_HPP

// Desk-scale environments with analytic dynamics, known reward bounds
// and hand-written termination predicates, plus an exact tabular MDP
// used by the theory tooling.

#include <memory>
#include <string>
#include <vector>

#include "bifrl/rng.hpp"

namespace bifrl {

struct EnvSpec {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> action_low, action_high;
  int max_episode_steps = 0;
  bool has_early_termination = false;
  double r_max = 0.0;  // |reward| <= r_max for every reachable transition
};

// One environment step. `done` is the termination predicate evaluated on
// next_state; episode truncation by the step limit is reported separately
// by StepResult so value bootstrapping is not masked at time limits.
struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

struct StepResult {
  Transition tr;
  bool truncated = false;  // step limit reached (not a terminal state)

  bool episode_over() const { return tr.done || truncated; }
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual const std::string& name() const = 0;

  // Draws an initial state and zeroes the step counter.
  virtual std::vector<double> reset(Rng& rng) = 0;

  // Pure in (state, action, rng draw); the step counter is the only
  // mutable piece and only feeds the truncation flag. Actions are
  // clipped to bounds; non-finite actions are an input error.
  virtual StepResult step(const std::vector<double>& state,
                          const std::vector<double>& action, Rng& rng) = 0;

  // Pure function of state; false everywhere for NT variants.
  virtual bool termination(const std::vector<double>& state) const = 0;

  int step_count() const { return step_count_; }
  // checkpoint restore of the episode cursor
  void restore_step_count(int n) { step_count_ = n; }

 protected:
  void check_action(const std::vector<double>& a) const;
  std::vector<double> clip_action(const std::vector<double>& a) const;
  int step_count_ = 0;
};

std::unique_ptr<Env> make_env(const std::string& name);

// Finite MDP with explicit transition tensor, reward table, discount and
// initial distribution. Row-major layouts: P[s][a][s2], r[s][a].
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> P;
  std::vector<double> r;
  double gamma = 0.99;
  std::vector<double> rho0;

  double p(int s, int a, int s2) const {
    return P[(static_cast<size_t>(s) * n_actions + a) * n_states + s2];
  }
  double& p(int s, int a, int s2) {
    return P[(static_cast<size_t>(s) * n_actions + a) * n_states + s2];
  }
  double reward(int s, int a) const {
    return r[static_cast<size_t>(s) * n_actions + a];
  }
  double& reward(int s, int a) {
    return r[static_cast<size_t>(s) * n_actions + a];
  }
  double r_max() const;

  // Throws std::invalid_argument when rows do not sum to 1 (1e-12),
  // gamma is outside [0,1) or rho0 is not a distribution.
  void validate() const;

  static TabularMDP chain(int n_states, double slip = 0.1,
                          double gamma = 0.99);
};

// Exact expected discounted return of a stochastic policy[s][a]:
// solves V = r_pi + gamma P_pi V and returns rho0^T V. The solution is
// checked to be a Bellman fixed point within 1e-10.
double exact_return(const TabularMDP& mdp, const std::vector<double>& policy);

// State-value vector of the same policy evaluation.
std::vector<double> exact_values(const TabularMDP& mdp,
                                 const std::vector<double>& policy);

}  // namespace bifrl

#endif
