#ifndef BIFRL_ORCHESTRATOR_HPP
#define BIFRL_ORCHESTRATOR_HPP

// End-to-end training loop: data collection, model/GAN refits, state
// prioritization, bi-directional rollouts, imitation and SAC updates,
// divergence diagnostics, evaluation, metrics and checkpoints. Stage
// ordering is fixed and observable through the trace log.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bifrl/agent.hpp"
#include "bifrl/buffers.hpp"
#include "bifrl/config.hpp"
#include "bifrl/dynamics.hpp"
#include "bifrl/envs.hpp"
#include "bifrl/theory.hpp"
#include "bifrl/vgan.hpp"

namespace bifrl {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic-action rollouts in the real environment; returns
// (mean, std) of undiscounted episode returns.
std::pair<double, double> evaluate_policy(const SacAgent& agent, Env& env,
                                          int episodes, Rng& rng);

// Configuration text stored inside a checkpoint file.
std::string checkpoint_config(const std::string& path);

// One metrics row per evaluation point. Values that do not apply to the
// active ablation are NaN.
struct MetricsRow {
  int epoch = 0;
  int64_t env_steps = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double fwd_model_val_nll = 0.0;
  double bwd_model_val_nll = 0.0;
  double backward_policy_val_nll = 0.0;
  double gan_disc_loss = 0.0;
  double gan_gen_loss = 0.0;
  double imitation_loss = 0.0;
  double actor_loss = 0.0;
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  double v_loss = 0.0;
  double alpha = 0.0;
  double div_fwd_mse = 0.0;
  double div_bwd_mse = 0.0;
  double div_policy_mse = 0.0;

  static const char* header();
  std::string csv() const;
};

class TrainLoop {
 public:
  // out_dir may be empty for in-memory runs (tests); otherwise metrics,
  // trace and checkpoints are written beneath it.
  TrainLoop(RunConfig cfg, std::string out_dir);

  // Runs epochs [current+1, cfg.epochs]; returns the number of epochs
  // executed. Stops early once eval return reaches cfg.stop_at_return.
  int run();

  // One epoch; returns false when the stop condition fired.
  bool run_epoch();

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  int epoch() const { return epoch_; }
  int64_t env_steps() const { return env_steps_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  const std::vector<std::string>& trace() const { return trace_; }
  const std::string& metrics_text() const { return metrics_text_; }
  const SacAgent& agent() const { return *agent_; }
  SacAgent& agent() { return *agent_; }
  Env& env() { return *env_; }
  const RunConfig& config() const { return cfg_; }
  const TransitionBuffer& d_env() const { return d_env_; }

  // First env-step count at which eval return reached thr, or -1.
  int64_t steps_to_threshold(double thr) const;

 private:
  void stage(const std::string& name);
  void collect_steps(int n, bool random_actions);
  void train_models();
  void train_vgan();
  void build_state_collection();
  void fill_hs_buffers();
  void do_backward_rollouts();
  void do_imitation();
  void do_forward_rollouts();
  void do_sac();
  void do_divergences();
  void do_evaluate();
  void append_metrics_row();
  void flush_files();
  double alpha_schedule(int epoch) const;
  bool models_needed() const {
    return cfg_.forward_rollouts || cfg_.backward_mode != BackwardMode::Off ||
           cfg_.gan_mode != GanMode::Off;
  }

  RunConfig cfg_;
  std::string out_dir_;

  std::unique_ptr<Env> env_;
  std::unique_ptr<Env> eval_env_;
  std::unique_ptr<SacAgent> agent_;
  std::unique_ptr<Ensemble> fwd_ens_;
  std::unique_ptr<Ensemble> bwd_ens_;
  std::unique_ptr<BackwardPolicy> bp_;
  std::unique_ptr<Vgan> vgan_;

  TransitionBuffer d_env_;
  std::vector<Transition> holdout_;
  DemoBuffer d_b_;
  TransitionBuffer d_f_;

  // per-epoch working state
  std::vector<std::vector<double>> collection_;
  std::vector<double> collection_values_;
  std::vector<std::vector<double>> hs_b_, hs_f_;

  Rng rng_env_, rng_model_, rng_rollout_, rng_agent_, rng_vgan_, rng_eval_,
      rng_priority_;

  std::vector<double> cur_state_;
  int episode_steps_ = 0;
  bool need_reset_ = true;

  int epoch_ = 0;
  int64_t env_steps_ = 0;
  int64_t imitation_skips_ = 0;
  int64_t sac_skips_ = 0;

  MetricsRow row_;
  std::vector<MetricsRow> metrics_;
  std::string metrics_text_;
  std::vector<std::string> trace_;
  std::string run_log_;
};

}  // namespace bifrl

#endif
