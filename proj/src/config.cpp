#include "bifrl/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace bifrl {

std::string ScheduleSpec::str() const {
  std::ostringstream os;
  if (x == y) {
    os << x;
  } else {
    os << x << "->" << y << "|" << a << "->" << b;
  }
  return os.str();
}

ScheduleSpec ScheduleSpec::parse(const std::string& s) {
  const auto bar = s.find('|');
  const auto arrow1 = s.find("->");
  if (arrow1 == std::string::npos) {
    // constant schedule
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad schedule: " + s);
    return constant(v);
  }
  if (bar == std::string::npos || bar < arrow1)
    throw std::invalid_argument("bad schedule: " + s);
  const auto arrow2 = s.find("->", bar);
  if (arrow2 == std::string::npos)
    throw std::invalid_argument("bad schedule: " + s);
  ScheduleSpec spec;
  spec.x = std::stod(s.substr(0, arrow1));
  spec.y = std::stod(s.substr(arrow1 + 2, bar - arrow1 - 2));
  spec.a = std::stoi(s.substr(bar + 1, arrow2 - bar - 1));
  spec.b = std::stoi(s.substr(arrow2 + 2));
  if (spec.a >= spec.b) throw std::invalid_argument("bad schedule: " + s);
  return spec;
}

const char* to_string(BackwardMode m) {
  switch (m) {
    case BackwardMode::Off: return "off";
    case BackwardMode::BR: return "br";
    case BackwardMode::BI: return "bi";
  }
  return "?";
}

const char* to_string(GanMode m) {
  switch (m) {
    case GanMode::Off: return "off";
    case GanMode::Vanilla: return "vanilla";
    case GanMode::Value: return "value";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw ConfigError("config: bad number for " + key + ": " + v);
  return out;
}

}  // namespace

void RunConfig::apply_kv(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "env") env = v;
  else if (key == "seed") seed = parse_num<uint64_t>(v, key);
  else if (key == "epochs") epochs = parse_num<int>(v, key);
  else if (key == "steps_per_epoch") steps_per_epoch = parse_num<int>(v, key);
  else if (key == "init_random_steps")
    init_random_steps = parse_num<int>(v, key);
  else if (key == "eval_episodes") eval_episodes = parse_num<int>(v, key);
  else if (key == "backward_mode") {
    if (v == "off") backward_mode = BackwardMode::Off;
    else if (v == "br") backward_mode = BackwardMode::BR;
    else if (v == "bi") backward_mode = BackwardMode::BI;
    else throw ConfigError("config: backward_mode must be off|br|bi, got " + v);
  } else if (key == "gan_mode") {
    if (v == "off") gan_mode = GanMode::Off;
    else if (v == "vanilla") gan_mode = GanMode::Vanilla;
    else if (v == "value") gan_mode = GanMode::Value;
    else
      throw ConfigError("config: gan_mode must be off|vanilla|value, got " +
                        v);
  } else if (key == "forward_rollouts")
    forward_rollouts = parse_bool(v, key);
  else if (key == "k_b") {
    try {
      k_b = ScheduleSpec::parse(v);
    } catch (const std::exception&) {
      throw ConfigError("config: bad k_b schedule: " + v);
    }
  } else if (key == "k_f") {
    try {
      k_f = ScheduleSpec::parse(v);
    } catch (const std::exception&) {
      throw ConfigError("config: bad k_f schedule: " + v);
    }
  } else if (key == "enforce_kb_lt_kf")
    enforce_kb_lt_kf = parse_bool(v, key);
  else if (key == "m1_backward_rollouts")
    m1_backward_rollouts = parse_num<int>(v, key);
  else if (key == "m2_forward_rollouts")
    m2_forward_rollouts = parse_num<int>(v, key);
  else if (key == "g1_imitation_updates")
    g1_imitation_updates = parse_num<int>(v, key);
  else if (key == "g2_sac_updates") g2_sac_updates = parse_num<int>(v, key);
  else if (key == "top_k_percent") top_k_percent = parse_num<double>(v, key);
  else if (key == "boltzmann_beta") boltzmann_beta = parse_num<double>(v, key);
  else if (key == "state_window") state_window = parse_num<size_t>(v, key);
  else if (key == "vgan_state_ratio")
    vgan_state_ratio = parse_num<double>(v, key);
  else if (key == "ensemble_size") ensemble_size = parse_num<int>(v, key);
  else if (key == "model_hidden") model_hidden = parse_num<int>(v, key);
  else if (key == "model_lr") model_lr = parse_num<double>(v, key);
  else if (key == "model_max_batches")
    model_max_batches = parse_num<int>(v, key);
  else if (key == "model_batch_size")
    model_batch_size = parse_num<int>(v, key);
  else if (key == "sac_lr") sac_lr = parse_num<double>(v, key);
  else if (key == "gamma") gamma = parse_num<double>(v, key);
  else if (key == "tau") tau = parse_num<double>(v, key);
  else if (key == "sac_batch_size") sac_batch_size = parse_num<int>(v, key);
  else if (key == "agent_hidden") agent_hidden = parse_num<int>(v, key);
  else if (key == "fixed_alpha") fixed_alpha = parse_num<double>(v, key);
  else if (key == "vgan_lambda") vgan_lambda = parse_num<double>(v, key);
  else if (key == "vgan_e_alpha") vgan_e_alpha = parse_num<int>(v, key);
  else if (key == "vgan_z_dim") vgan_z_dim = parse_num<int>(v, key);
  else if (key == "vgan_steps_per_epoch")
    vgan_steps_per_epoch = parse_num<int>(v, key);
  else if (key == "vgan_batch_size")
    vgan_batch_size = parse_num<int>(v, key);
  else if (key == "vgan_reward_reparam")
    vgan_reward_reparam = parse_bool(v, key);
  else if (key == "env_buffer_capacity")
    env_buffer_capacity = parse_num<size_t>(v, key);
  else if (key == "holdout_every") holdout_every = parse_num<int>(v, key);
  else if (key == "stop_at_return") stop_at_return = parse_num<double>(v, key);
  else if (key == "checkpoint_every")
    checkpoint_every = parse_num<int>(v, key);
  else
    throw ConfigError("config: unknown key: " + key);
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key = value");
    cfg.apply_kv(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return from_text(os.str());
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (steps_per_epoch < 1)
    throw ConfigError("config: steps_per_epoch must be >= 1");
  if (top_k_percent <= 0.0 || top_k_percent > 100.0)
    throw ConfigError("config: top_k_percent must be in (0,100]");
  if (boltzmann_beta <= 0.0 || boltzmann_beta >= 1.0)
    throw ConfigError("config: boltzmann_beta must be in (0,1)");
  if (gamma < 0.0 || gamma >= 1.0)
    throw ConfigError("config: gamma must be in [0,1)");
  if (ensemble_size < 2)
    throw ConfigError("config: ensemble_size must be >= 2");
  if (vgan_e_alpha < 2)
    throw ConfigError("config: vgan_e_alpha must be >= 2");
  if (vgan_state_ratio < 0.0)
    throw ConfigError("config: vgan_state_ratio must be >= 0");
  if (holdout_every < 2)
    throw ConfigError("config: holdout_every must be >= 2");
  if (enforce_kb_lt_kf) {
    // the backward horizon may never exceed the forward one, and must be
    // strictly shorter once both schedules settle
    for (int e = 1; e <= epochs; ++e) {
      if (k_b.eval_int(e) > k_f.eval_int(e))
        throw ConfigError(
            "config: k_b exceeds k_f at epoch " + std::to_string(e) +
            " (disable enforce_kb_lt_kf to allow)");
    }
    if (k_b.eval_int(epochs) >= k_f.eval_int(epochs) &&
        k_f.eval_int(epochs) > 1)
      throw ConfigError(
          "config: k_b must settle strictly below k_f "
          "(disable enforce_kb_lt_kf to allow)");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "env = " << env << "\n";
  os << "seed = " << seed << "\n";
  os << "epochs = " << epochs << "\n";
  os << "steps_per_epoch = " << steps_per_epoch << "\n";
  os << "init_random_steps = " << init_random_steps << "\n";
  os << "eval_episodes = " << eval_episodes << "\n";
  os << "backward_mode = " << to_string(backward_mode) << "\n";
  os << "gan_mode = " << to_string(gan_mode) << "\n";
  os << "forward_rollouts = " << (forward_rollouts ? "true" : "false") << "\n";
  os << "k_b = " << k_b.str() << "\n";
  os << "k_f = " << k_f.str() << "\n";
  os << "enforce_kb_lt_kf = " << (enforce_kb_lt_kf ? "true" : "false") << "\n";
  os << "m1_backward_rollouts = " << m1_backward_rollouts << "\n";
  os << "m2_forward_rollouts = " << m2_forward_rollouts << "\n";
  os << "g1_imitation_updates = " << g1_imitation_updates << "\n";
  os << "g2_sac_updates = " << g2_sac_updates << "\n";
  os << "top_k_percent = " << top_k_percent << "\n";
  os << "boltzmann_beta = " << boltzmann_beta << "\n";
  os << "state_window = " << state_window << "\n";
  os << "vgan_state_ratio = " << vgan_state_ratio << "\n";
  os << "ensemble_size = " << ensemble_size << "\n";
  os << "model_hidden = " << model_hidden << "\n";
  os << "model_lr = " << model_lr << "\n";
  os << "model_max_batches = " << model_max_batches << "\n";
  os << "model_batch_size = " << model_batch_size << "\n";
  os << "sac_lr = " << sac_lr << "\n";
  os << "gamma = " << gamma << "\n";
  os << "tau = " << tau << "\n";
  os << "sac_batch_size = " << sac_batch_size << "\n";
  os << "agent_hidden = " << agent_hidden << "\n";
  os << "fixed_alpha = " << fixed_alpha << "\n";
  os << "vgan_lambda = " << vgan_lambda << "\n";
  os << "vgan_e_alpha = " << vgan_e_alpha << "\n";
  os << "vgan_z_dim = " << vgan_z_dim << "\n";
  os << "vgan_steps_per_epoch = " << vgan_steps_per_epoch << "\n";
  os << "vgan_batch_size = " << vgan_batch_size << "\n";
  os << "vgan_reward_reparam = " << (vgan_reward_reparam ? "true" : "false")
     << "\n";
  os << "env_buffer_capacity = " << env_buffer_capacity << "\n";
  os << "holdout_every = " << holdout_every << "\n";
  if (!std::isnan(stop_at_return)) os << "stop_at_return = " << stop_at_return << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  return os.str();
}

}  // namespace bifrl
