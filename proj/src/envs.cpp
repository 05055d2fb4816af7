#include "bifrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bifrl {

namespace {
constexpr double kPi = 3.14159265358979323846;

double angle_normalize(double x) {
  // wrap into [-pi, pi]
  x = std::fmod(x + kPi, 2.0 * kPi);
  if (x < 0) x += 2.0 * kPi;
  return x - kPi;
}
}  // namespace

void Env::check_action(const std::vector<double>& a) const {
  if (static_cast<int>(a.size()) != spec().action_dim)
    throw std::invalid_argument("action dimension mismatch");
  for (double v : a)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite action");
}

std::vector<double> Env::clip_action(const std::vector<double>& a) const {
  std::vector<double> c(a);
  const auto& sp = spec();
  for (int i = 0; i < sp.action_dim; ++i)
    c[i] = std::clamp(c[i], sp.action_low[i], sp.action_high[i]);
  return c;
}

// ---------------------------------------------------------------------
// Pendulum swing-up, canonical constants. Observation is
// [cos(theta), sin(theta), theta_dot]; cost form reward, never terminal.
// ---------------------------------------------------------------------
class PendulumEnv final : public Env {
 public:
  PendulumEnv() {
    spec_.state_dim = 3;
    spec_.action_dim = 1;
    spec_.action_low = {-kMaxTorque};
    spec_.action_high = {kMaxTorque};
    spec_.max_episode_steps = 200;
    spec_.has_early_termination = false;
    // worst case: pi^2 + 0.1*8^2 + 0.001*2^2
    spec_.r_max = kPi * kPi + 0.1 * kMaxSpeed * kMaxSpeed +
                  0.001 * kMaxTorque * kMaxTorque;
    name_ = "pendulum";
  }

  const EnvSpec& spec() const override { return spec_; }
  const std::string& name() const override { return name_; }

  std::vector<double> reset(Rng& rng) override {
    theta_ = rng.uniform(-kPi, kPi);
    theta_dot_ = rng.uniform(-1.0, 1.0);
    step_count_ = 0;
    return obs();
  }

  StepResult step(const std::vector<double>& state,
                  const std::vector<double>& action, Rng&) override {
    check_action(action);
    const double u = std::clamp(action[0], -kMaxTorque, kMaxTorque);
    const double th = std::atan2(state[1], state[0]);
    const double thdot = state[2];

    const double cost = angle_normalize(th) * angle_normalize(th) +
                        0.1 * thdot * thdot + 0.001 * u * u;
    double new_thdot =
        thdot + (3.0 * kG / (2.0 * kLength) * std::sin(th) +
                 3.0 / (kMass * kLength * kLength) * u) *
                    kDt;
    new_thdot = std::clamp(new_thdot, -kMaxSpeed, kMaxSpeed);
    const double new_th = th + new_thdot * kDt;

    theta_ = new_th;
    theta_dot_ = new_thdot;
    ++step_count_;

    StepResult res;
    res.tr.state = state;
    res.tr.action = {u};
    res.tr.reward = -cost;
    res.tr.next_state = {std::cos(new_th), std::sin(new_th), new_thdot};
    res.tr.done = false;
    res.truncated = step_count_ >= spec_.max_episode_steps;
    return res;
  }

  bool termination(const std::vector<double>&) const override { return false; }

 private:
  std::vector<double> obs() const {
    return {std::cos(theta_), std::sin(theta_), theta_dot_};
  }

  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kG = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  EnvSpec spec_;
  std::string name_;
  double theta_ = 0.0, theta_dot_ = 0.0;
};

// ---------------------------------------------------------------------
// 2-D point mass reaching a goal. State [px, py, vx, vy], acceleration
// actions. The terminating variant ends on leaving the arena or on
// reaching the goal; the NT variant runs to the step limit.
// ---------------------------------------------------------------------
class PointMassEnv final : public Env {
 public:
  explicit PointMassEnv(bool early_termination) {
    spec_.state_dim = 4;
    spec_.action_dim = 2;
    spec_.action_low = {-1.0, -1.0};
    spec_.action_high = {1.0, 1.0};
    spec_.max_episode_steps = 200;
    spec_.has_early_termination = early_termination;
    // worst case distance from the walls to the goal, control cost, bonus
    spec_.r_max = std::hypot(kWall + kGoalX, kWall + kGoalY) + 0.01 * 2.0 +
                  kGoalBonus;
    name_ = early_termination ? "pointmass" : "pointmass-nt";
  }

  const EnvSpec& spec() const override { return spec_; }
  const std::string& name() const override { return name_; }

  std::vector<double> reset(Rng& rng) override {
    step_count_ = 0;
    return {rng.uniform(-1.5, -0.5), rng.uniform(-1.5, -0.5),
            rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
  }

  StepResult step(const std::vector<double>& state,
                  const std::vector<double>& action, Rng&) override {
    check_action(action);
    const auto a = clip_action(action);
    std::vector<double> next(4);
    next[2] = std::clamp(state[2] + a[0] * kDt, -kMaxVel, kMaxVel);
    next[3] = std::clamp(state[3] + a[1] * kDt, -kMaxVel, kMaxVel);
    next[0] = std::clamp(state[0] + next[2] * kDt, -kWall, kWall);
    next[1] = std::clamp(state[1] + next[3] * kDt, -kWall, kWall);
    ++step_count_;

    const double dist = std::hypot(next[0] - kGoalX, next[1] - kGoalY);
    double reward = -dist - 0.01 * (a[0] * a[0] + a[1] * a[1]);
    if (at_goal(next)) reward += kGoalBonus;

    StepResult res;
    res.tr.state = state;
    res.tr.action = a;
    res.tr.reward = reward;
    res.tr.next_state = std::move(next);
    res.tr.done = termination(res.tr.next_state);
    res.truncated = !res.tr.done && step_count_ >= spec_.max_episode_steps;
    return res;
  }

  bool termination(const std::vector<double>& s) const override {
    if (!spec_.has_early_termination) return false;
    return out_of_arena(s) || at_goal(s);
  }

 private:
  static bool out_of_arena(const std::vector<double>& s) {
    return std::abs(s[0]) > kArena || std::abs(s[1]) > kArena;
  }
  static bool at_goal(const std::vector<double>& s) {
    return std::hypot(s[0] - kGoalX, s[1] - kGoalY) < kGoalRadius;
  }

  static constexpr double kDt = 0.2;
  static constexpr double kMaxVel = 2.0;
  static constexpr double kArena = 2.0;
  static constexpr double kWall = 4.0;  // hard position limit
  static constexpr double kGoalX = 1.5;
  static constexpr double kGoalY = 1.5;
  static constexpr double kGoalRadius = 0.15;
  static constexpr double kGoalBonus = 10.0;

  EnvSpec spec_;
  std::string name_;
};

// ---------------------------------------------------------------------
// Continuous wrapper over the chain TabularMDP: 1-dim observation is the
// scaled state index, 1-dim action is discretized by sign.
// ---------------------------------------------------------------------
class ChainEnv final : public Env {
 public:
  ChainEnv() : mdp_(TabularMDP::chain(5)) {
    spec_.state_dim = 1;
    spec_.action_dim = 1;
    spec_.action_low = {-1.0};
    spec_.action_high = {1.0};
    spec_.max_episode_steps = 200;
    spec_.has_early_termination = false;
    spec_.r_max = mdp_.r_max();
    name_ = "chain";
  }

  const EnvSpec& spec() const override { return spec_; }
  const std::string& name() const override { return name_; }

  const TabularMDP& mdp() const { return mdp_; }

  std::vector<double> reset(Rng& rng) override {
    step_count_ = 0;
    double u = rng.uniform01();
    int s = 0;
    double acc = 0.0;
    for (int i = 0; i < mdp_.n_states; ++i) {
      acc += mdp_.rho0[i];
      if (u <= acc) {
        s = i;
        break;
      }
    }
    return {to_obs(s)};
  }

  StepResult step(const std::vector<double>& state,
                  const std::vector<double>& action, Rng& rng) override {
    check_action(action);
    const int s = to_index(state[0]);
    const int a = action[0] < 0.0 ? 0 : 1;
    const double u = rng.uniform01();
    int s2 = mdp_.n_states - 1;
    double acc = 0.0;
    for (int j = 0; j < mdp_.n_states; ++j) {
      acc += mdp_.p(s, a, j);
      if (u <= acc) {
        s2 = j;
        break;
      }
    }
    ++step_count_;

    StepResult res;
    res.tr.state = state;
    res.tr.action = {std::clamp(action[0], -1.0, 1.0)};
    res.tr.reward = mdp_.reward(s, a);
    res.tr.next_state = {to_obs(s2)};
    res.tr.done = false;
    res.truncated = step_count_ >= spec_.max_episode_steps;
    return res;
  }

  bool termination(const std::vector<double>&) const override { return false; }

 private:
  double to_obs(int s) const {
    return 2.0 * s / (mdp_.n_states - 1) - 1.0;
  }
  int to_index(double obs) const {
    const int s = static_cast<int>(std::lround((obs + 1.0) * 0.5 *
                                               (mdp_.n_states - 1)));
    return std::clamp(s, 0, mdp_.n_states - 1);
  }

  TabularMDP mdp_;
  EnvSpec spec_;
  std::string name_;
};

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<PendulumEnv>();
  if (name == "pointmass") return std::make_unique<PointMassEnv>(true);
  if (name == "pointmass-nt") return std::make_unique<PointMassEnv>(false);
  if (name == "chain") return std::make_unique<ChainEnv>();
  throw std::invalid_argument("unknown env: " + name);
}

// ---------------------------------------------------------------------
// TabularMDP
// ---------------------------------------------------------------------
double TabularMDP::r_max() const {
  double m = 0.0;
  for (double v : r) m = std::max(m, std::abs(v));
  return m;
}

void TabularMDP::validate() const {
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("gamma must be in [0,1)");
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      double tot = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double v = p(s, a, s2);
        if (v < 0.0) throw std::invalid_argument("negative probability");
        tot += v;
      }
      if (std::abs(tot - 1.0) > 1e-12)
        throw std::invalid_argument("transition row does not sum to 1");
    }
  double tot = 0.0;
  for (double v : rho0) tot += v;
  if (std::abs(tot - 1.0) > 1e-12)
    throw std::invalid_argument("rho0 does not sum to 1");
}

TabularMDP TabularMDP::chain(int n, double slip, double gamma) {
  TabularMDP m;
  m.n_states = n;
  m.n_actions = 2;
  m.gamma = gamma;
  m.P.assign(static_cast<size_t>(n) * 2 * n, 0.0);
  m.r.assign(static_cast<size_t>(n) * 2, 0.0);
  m.rho0.assign(n, 0.0);
  m.rho0[0] = 1.0;
  for (int s = 0; s < n; ++s) {
    const int left = std::max(0, s - 1);
    const int right = std::min(n - 1, s + 1);
    m.p(s, 0, left) += 1.0 - slip;
    m.p(s, 0, s) += slip;
    m.p(s, 1, right) += 1.0 - slip;
    m.p(s, 1, s) += slip;
    // reward for stepping right from the penultimate state; small cost
    // elsewhere keeps the optimal policy unique
    m.reward(s, 0) = -0.01;
    m.reward(s, 1) = (s >= n - 2) ? 1.0 : -0.01;
  }
  m.validate();
  return m;
}

namespace {

// Dense solve of (I - gamma P_pi) V = r_pi by Gaussian elimination with
// partial pivoting; systems here are tiny.
std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b,
                                 int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int row = col + 1; row < n; ++row)
      if (std::abs(A[row * n + col]) > std::abs(A[piv * n + col])) piv = row;
    if (std::abs(A[piv * n + col]) < 1e-14)
      throw std::runtime_error("singular policy-evaluation system");
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(A[col * n + j], A[piv * n + j]);
      std::swap(b[col], b[piv]);
    }
    const double d = A[col * n + col];
    for (int row = col + 1; row < n; ++row) {
      const double f = A[row * n + col] / d;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) A[row * n + j] -= f * A[col * n + j];
      b[row] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int row = n - 1; row >= 0; --row) {
    double s = b[row];
    for (int j = row + 1; j < n; ++j) s -= A[row * n + j] * x[j];
    x[row] = s / A[row * n + row];
  }
  return x;
}

void check_policy(const TabularMDP& mdp, const std::vector<double>& policy) {
  if (static_cast<int>(policy.size()) != mdp.n_states * mdp.n_actions)
    throw std::invalid_argument("policy shape mismatch");
  for (int s = 0; s < mdp.n_states; ++s) {
    double tot = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double v = policy[s * mdp.n_actions + a];
      if (v < 0.0) throw std::invalid_argument("negative policy probability");
      tot += v;
    }
    if (std::abs(tot - 1.0) > 1e-9)
      throw std::invalid_argument("policy row does not sum to 1");
  }
}

}  // namespace

std::vector<double> exact_values(const TabularMDP& mdp,
                                 const std::vector<double>& policy) {
  mdp.validate();
  check_policy(mdp, policy);
  const int n = mdp.n_states;
  std::vector<double> A(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> b(n, 0.0);
  for (int s = 0; s < n; ++s) {
    A[s * n + s] = 1.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = policy[s * mdp.n_actions + a];
      b[s] += pa * mdp.reward(s, a);
      for (int s2 = 0; s2 < n; ++s2)
        A[s * n + s2] -= mdp.gamma * pa * mdp.p(s, a, s2);
    }
  }
  std::vector<double> V = solve_linear(std::move(A), std::move(b), n);
  // fixed-point residual check
  for (int s = 0; s < n; ++s) {
    double rhs = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = policy[s * mdp.n_actions + a];
      double ev = 0.0;
      for (int s2 = 0; s2 < n; ++s2) ev += mdp.p(s, a, s2) * V[s2];
      rhs += pa * (mdp.reward(s, a) + mdp.gamma * ev);
    }
    if (std::abs(rhs - V[s]) > 1e-10 * std::max(1.0, std::abs(V[s])))
      throw std::runtime_error("policy evaluation residual too large");
  }
  return V;
}

double exact_return(const TabularMDP& mdp, const std::vector<double>& policy) {
  const std::vector<double> V = exact_values(mdp, policy);
  double eta = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) eta += mdp.rho0[s] * V[s];
  return eta;
}

}  // namespace bifrl
