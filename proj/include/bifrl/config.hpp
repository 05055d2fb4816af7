#ifndef BIFRL_CONFIG_HPP
#define BIFRL_CONFIG_HPP

// Run configuration: flat key = value text files, validated on load.
// Unknown keys are errors.

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "bifrl/schedule.hpp"

namespace bifrl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BackwardMode { Off, BR, BI };
enum class GanMode { Off, Vanilla, Value };

struct RunConfig {
  std::string env = "pendulum";
  uint64_t seed = 0;
  int epochs = 150;
  int steps_per_epoch = 200;
  int init_random_steps = 1000;
  int eval_episodes = 10;

  // ablation axes
  BackwardMode backward_mode = BackwardMode::BI;
  GanMode gan_mode = GanMode::Value;
  bool forward_rollouts = true;  // off = model-free SAC on D_env

  // rollout schedules and counts
  ScheduleSpec k_b = {1, 3, 1, 5};
  ScheduleSpec k_f = {1, 5, 1, 5};
  bool enforce_kb_lt_kf = true;
  int m1_backward_rollouts = 400;
  int m2_forward_rollouts = 2000;
  int g1_imitation_updates = 20;
  int g2_sac_updates = 200;

  // prioritization
  double top_k_percent = 10.0;
  double boltzmann_beta = 0.7;
  size_t state_window = 10000;
  double vgan_state_ratio = 1.0;

  // dynamics ensembles
  int ensemble_size = 5;
  int model_hidden = 64;
  double model_lr = 1e-3;
  int model_max_batches = 240;
  int model_batch_size = 256;

  // SAC
  double sac_lr = 3e-4;
  double gamma = 0.99;
  double tau = 0.005;
  int sac_batch_size = 256;
  int agent_hidden = 64;
  double fixed_alpha = -1.0;  // < 0 means auto-tuned temperature

  // VGAN
  double vgan_lambda = 1e-3;  // pendulum value; most domains use 1e-4
  int vgan_e_alpha = 10;
  int vgan_z_dim = 4;
  int vgan_steps_per_epoch = 50;
  int vgan_batch_size = 128;
  bool vgan_reward_reparam = true;

  // buffers
  size_t env_buffer_capacity = 1000000;
  int holdout_every = 10;  // every Nth env transition goes to the holdout

  // run control
  double stop_at_return = std::numeric_limits<double>::quiet_NaN();
  int checkpoint_every = 0;  // epochs; 0 = only when asked

  // ---- helpers ----
  static RunConfig load(const std::string& path);
  static RunConfig from_text(const std::string& text);
  void apply_kv(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;
};

const char* to_string(BackwardMode m);
const char* to_string(GanMode m);

}  // namespace bifrl

#endif
