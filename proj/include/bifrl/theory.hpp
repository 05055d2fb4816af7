#ifndef BIFRL_THEORY_HPP
#define BIFRL_THEORY_HPP

// Executable return-discrepancy bound: closed-form evaluation, exact
// total-variation divergences on tabular MDPs, an empirical validator
// over random instances, and the MSE divergence diagnostics tracked
// during training.

#include <string>
#include <vector>

#include "bifrl/buffers.hpp"
#include "bifrl/dynamics.hpp"
#include "bifrl/envs.hpp"
#include "bifrl/rng.hpp"

namespace bifrl {

struct BoundInputs {
  double r_max = 0.0;
  double gamma = 0.0;
  int k_b = 0;
  double eps_pi = 0.0;
  double eps_m = 0.0;
};

// 2 r_max (1 - gamma^(k_b+1)) / (1 - gamma) * (eps_pi + k_b (eps_pi + eps_m))
// Monotone non-decreasing in every input; gamma = 1 is an error.
double discrepancy_bound(const BoundInputs& in);

// Expected total-variation divergences between (pi, p) and (pi_e, p_e),
// exactly as defined: eps_pi under the (pi, p) occupancy, eps_m under
// the (pi, p_e) occupancy, each maximized over t in [0, k_b].
struct Divergences {
  double eps_pi = 0.0;
  double eps_m = 0.0;
};
Divergences exact_divergences(const TabularMDP& mdp,
                              const std::vector<double>& p_e,
                              const std::vector<double>& pi,
                              const std::vector<double>& pi_e, int k_b);

//

// Discounted return truncated at horizon k_b under an arbitrary
// transition tensor (same shape as mdp.P) and stochastic policy.
double truncated_return(const TabularMDP& mdp, const std::vector<double>& P,
                        const std::vector<double>& pi, int k_b);

struct BoundValidationReport {
  int instances = 0;
  int violations = 0;
  std::vector<double> margins;      // bound - |discrepancy|, per instance
  std::vector<double> bounds;
  std::vector<double> discrepancies;
  double median_margin = 0.0;
  std::string worst_case;           // serialized counterexample if any
};

// Random small tabular instances with perturbed expert policy/model;
// checks |eta - eta_e| <= bound on each. A violation is a bug in one of
// the two sides, not an expected outcome.
BoundValidationReport validate_bound(Rng& rng, int n_instances,
                                     const std::vector<int>& k_b_choices = {
                                         1, 2, 3});

// Per-epoch Fig-style divergence diagnostics on held-out transitions.
struct DivergenceReport {
  bool valid = false;
  double forward_model_mse = 0.0;
  double backward_model_mse = 0.0;
  double policy_divergence_mse = 0.0;
};

DivergenceReport measure_divergences(const std::vector<Transition>& holdout,
                                     const BackwardPolicy* bp,
                                     const Ensemble* forward_ens,
                                     const Ensemble* backward_ens,
                                     size_t min_samples = 20);

}  // namespace bifrl

#endif
