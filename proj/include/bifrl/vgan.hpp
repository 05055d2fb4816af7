#ifndef BIFRL_VGAN_HPP
#define BIFRL_VGAN_HPP

// Value-regularized least-squares GAN over states. The generator is
// pushed toward states the critic scores highly; early in training the
// regularizer leans on the learned reward model instead, weighted by a
// schedule on alpha. Gradients flow only into the generator; critic,
// policy and dynamics model act as frozen functions here.

#include <vector>

#include "bifrl/agent.hpp"
#include "bifrl/dynamics.hpp"
#include "bifrl/net.hpp"
#include "bifrl/rng.hpp"

namespace bifrl {

struct VganConfig {
  int z_dim = 4;
  double lr = 1e-3;
  double lambda = 1e-4;
  int steps_per_epoch = 50;
  int batch_size = 128;
  std::vector<int> hidden = {64, 64};
  bool reward_reparam = true;  // backprop through the sampled reward
};

// Frozen context the value regularizer evaluates against.
struct RegContext {
  const SacAgent* agent = nullptr;
  const Ensemble* forward_ens = nullptr;
  double alpha = 1.0;
  bool reward_reparam = true;
};

class Vgan {
 public:
  Vgan() = default;
  Vgan(int state_dim, const VganConfig& cfg, Rng& init_rng);

  int z_dim() const { return cfg_.z_dim; }
  int state_dim() const { return state_dim_; }

  // n generated states; deterministic given the rng stream.
  std::vector<std::vector<double>> sample_states(int n, Rng& rng) const;

  // L_v = mean(alpha * Q(s, pi(s)) + (1 - alpha) * r_hat) over the given
  // states. Accumulates scale * dL_v/ds into dS when non-null.
  double value_term(const double* S, int n, const RegContext& ctx, Rng& rng,
                    double scale, double* dS) const;

  // Spec-level op: regularizer value at G(z) for a latent batch.
  double value_regularizer(const double* Z, int n, const RegContext& ctx,
                           Rng& rng) const;

  // One least-squares discriminator step on real vs generated states.
  double discriminator_step(const std::vector<std::vector<double>>& real,
                            Rng& rng);

  // One generator step of the adversarial loss minus lambda * L_v.
  double generator_step(double lambda, const RegContext& ctx, Rng& rng);

  // Raw discriminator scores, used by diagnostics and tests.
  std::vector<double> disc_scores(const double* S, int n) const;

  Mlp& generator() { return gen_; }
  const Mlp& generator() const { return gen_; }
  Mlp& discriminator() { return disc_; }
  Adam& generator_opt() { return gen_opt_; }
  Adam& discriminator_opt() { return disc_opt_; }
  const VganConfig& config() const { return cfg_; }

 private:
  void gen_forward(const double* Z, int n, MlpCache& c,
                   const double** out) const;

  VganConfig cfg_;
  int state_dim_ = 0;
  Mlp gen_, disc_;
  Adam gen_opt_{1e-3}, disc_opt_{1e-3};
};

}  // namespace bifrl

#endif
