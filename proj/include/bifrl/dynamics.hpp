#ifndef BIFRL_DYNAMICS_HPP
#define BIFRL_DYNAMICS_HPP

// Bi-directional probabilistic ensembles over state deltas and rewards,
// the backward policy, and the two rollout generators. Each ensemble
// member is an independently initialized Gaussian-head MLP trained on
// its own bootstrap resample with holdout early stopping.

#include <functional>
#include <vector>

#include "bifrl/buffers.hpp"
#include "bifrl/envs.hpp"
#include "bifrl/net.hpp"
#include "bifrl/rng.hpp"

namespace bifrl {

struct Normalizer {
  std::vector<double> mean, inv_std;

  void fit(const double* X, int rows, int cols);
  void apply(double* X, int rows) const;
  bool fitted() const { return !mean.empty(); }
};

struct ModelTrainOpts {
  int batch_size = 256;
  double lr = 1e-3;
  double holdout_fraction = 0.1;
  int max_holdout = 2000;
  int eval_every = 8;    // batches between holdout evaluations
  int patience = 5;      // evaluations without improvement
  int max_batches = 240;  // per member per refit
  int min_samples = 64;  // below this, training is skipped
};

struct ModelTrainReport {
  bool trained = false;     // false when skipped for lack of data
  double val_loss = 0.0;    // mean over members of best holdout NLL
  std::vector<std::vector<double>> val_history;  // per member
};

// Mean per-sample Gaussian NLL of net on (X, Y); inputs already
// normalized by the caller when a normalizer is in play.
double gaussian_net_nll(const Mlp& net, const double* X, const double* Y,
                        int rows);

// Shared trainer: minibatch NLL descent with holdout early stopping and
// best-parameter restore. Returns the holdout-loss history. When
// `bootstrap` is non-null it holds resampled training indices.
std::vector<double> train_gaussian_net(Mlp& net, Adam& opt, const double* X,
                                       const double* Y, int rows, int in_dim,
                                       int out_dim,
                                       const std::vector<int>* bootstrap,
                                       const std::vector<int>& holdout,
                                       const std::vector<int>& train_idx,
                                       const ModelTrainOpts& opts, Rng& rng,
                                       double* best_val);

class Ensemble {
 public:
  enum class Direction { Forward, Backward };

  Ensemble() = default;
  Ensemble(Direction dir, int state_dim, int action_dim,
           const std::vector<int>& hidden, int n_members, double lr,
           Rng& init_rng);

  Direction direction() const { return dir_; }
  int size() const { return static_cast<int>(members_.size()); }
  int state_dim() const { return state_dim_; }
  int input_dim() const { return state_dim_ + action_dim_; }
  int head_dim() const { return state_dim_ + 1; }  // delta plus reward
  bool trained() const { return trained_; }

  // X rows are [state | action]; Y rows are [delta_state | reward].
  // Forward: delta = s_{t+1} - s_t, reward r_t, input (s_t, a_t).
  // Backward: delta = s_{t-1} - s_t, reward r_{t-1}, input (s_t, a_{t-1}).
  ModelTrainReport train(const double* X, const double* Y, int rows,
                         const ModelTrainOpts& opts, Rng& rng);

  // One uniformly chosen member per row; samples the head. Writes
  // delta[rows x state_dim] and reward[rows].
  void predict(const double* X, int rows, Rng& rng, double* delta,
               double* reward) const;

  // Ensemble-averaged mean prediction (no sampling); for diagnostics.
  void mean_prediction(const double* X, int rows, double* delta,
                       double* reward) const;

  // Head of one member on one input; sampled-member plumbing for tests.
  GaussianHead member_head(int member, const std::vector<double>& x) const;

  // Mean head of a uniformly chosen member with gradient access for the
  // GAN reward path: returns the member index used for the whole batch.
  int pick_member(Rng& rng) const;
  Mlp& member(int i) { return members_[i]; }
  const Mlp& member(int i) const { return members_[i]; }
  const Normalizer& normalizer() const { return norm_; }
  Normalizer& normalizer() { return norm_; }
  void set_trained(bool t) { trained_ = t; }
  std::vector<Adam>& optimizers() { return opts_; }

 private:
  Direction dir_ = Direction::Forward;
  int state_dim_ = 0;
  int action_dim_ = 0;
  bool trained_ = false;
  Normalizer norm_;
  std::vector<Mlp> members_;
  std::vector<Adam> opts_;
};

// predict(ensemble, state, action) -> (next or previous state, reward)
std::pair<std::vector<double>, double> predict(const Ensemble& ens,
                                               const std::vector<double>& state,
                                               const std::vector<double>& action,
                                               Rng& rng);

class BackwardPolicy {
 public:
  BackwardPolicy() = default;
  BackwardPolicy(int state_dim, int action_dim,
                 const std::vector<int>& hidden, double lr,
                 std::vector<double> action_low,
                 std::vector<double> action_high, Rng& init_rng);

  bool trained() const { return trained_; }

  // X rows are successor states s_t, Y rows the actions a_{t-1}.
  ModelTrainReport train(const double* X, const double* Y, int rows,
                         const ModelTrainOpts& opts, Rng& rng);

  // Samples actions and clips them to bounds. A[rows x action_dim].
  void sample_actions(const double* S, int rows, Rng& rng, double* A) const;

  // Clipped mean actions, for divergence measurement.
  void mean_actions(const double* S, int rows, double* A) const;

  GaussianHead head(const std::vector<double>& s) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  Adam& optimizer() { return opt_; }
  Normalizer& normalizer() { return norm_; }
  const Normalizer& normalizer() const { return norm_; }
  void set_trained(bool t) { trained_ = t; }

 private:
  int state_dim_ = 0;
  int action_dim_ = 0;
  bool trained_ = false;
  Normalizer norm_;
  Mlp net_;
  Adam opt_{1e-3};
  std::vector<double> low_, high_;
};

// Policy sampler callback: fills A[rows x action_dim] from S[rows x dim].
using PolicySampler =
    std::function<void(const double* S, int rows, double* A, Rng& rng)>;

struct BackwardRolloutResult {
  std::vector<Demo> demos;              // forward temporal order
  std::vector<Transition> transitions;  // same traces as transitions (BR)
  int nonfinite_truncations = 0;
};

// Runs k_b backward steps from every start state in lockstep. Emission
// is reversed into forward order per trace; generation stops early on a
// terminal or non-finite generated predecessor.
BackwardRolloutResult backward_rollouts(
    const std::vector<std::vector<double>>& starts, int k_b,
    const BackwardPolicy& bp, const Ensemble& backward_ens, const Env& env,
    Rng& rng);

struct ForwardRolloutResult {
  std::vector<Transition> transitions;
  int nonfinite_truncations = 0;
};

ForwardRolloutResult forward_rollouts(
    const std::vector<std::vector<double>>& starts, int k_f,
    const PolicySampler& policy, const Ensemble& forward_ens, const Env& env,
    Rng& rng);

}  // namespace bifrl

#endif
