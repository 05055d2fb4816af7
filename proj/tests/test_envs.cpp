#include <cmath>
#include <vector>

#include "bifrl/envs.hpp"
#include "bifrl/rng.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bifrl;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("pendulum reset ranges over many draws") {
  auto env = make_env("pendulum");
  Rng rng = Rng::seeded(10);
  for (int i = 0; i < 10000; ++i) {
    auto s = env->reset(rng);
    REQUIRE(s.size() == 3);
    const double th = std::atan2(s[1], s[0]);
    CHECK(th >= -kPi);
    CHECK(th <= kPi);
    CHECK(s[2] >= -1.0);
    CHECK(s[2] <= 1.0);
    CHECK(s[0] * s[0] + s[1] * s[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("seeded reset reproducible") {
  auto env = make_env("pointmass");
  Rng a = Rng::seeded(3), b = Rng::seeded(3);
  CHECK(env->reset(a) == env->reset(b));
}

TEST_CASE("pendulum upright equilibrium with zero torque has zero cost") {
  auto env = make_env("pendulum");
  Rng rng = Rng::seeded(0);
  env->reset(rng);
  StepResult r = env->step({1.0, 0.0, 0.0}, {0.0}, rng);
  CHECK(r.tr.reward == doctest::Approx(0.0));
  CHECK(r.tr.next_state[0] == doctest::Approx(1.0));
}

TEST_CASE("point-mass integrator matches hand kinematics") {
  auto env = make_env("pointmass-nt");
  Rng rng = Rng::seeded(0);
  env->reset(rng);
  // dt = 0.2, semi-implicit Euler: v' = v + a*dt, p' = p + v'*dt
  StepResult r = env->step({0.0, 0.0, 0.5, -0.25}, {1.0, 0.0}, rng);
  CHECK(r.tr.next_state[2] == doctest::Approx(0.5 + 1.0 * 0.2));
  CHECK(r.tr.next_state[3] == doctest::Approx(-0.25));
  CHECK(r.tr.next_state[0] == doctest::Approx(0.0 + 0.7 * 0.2));
  CHECK(r.tr.next_state[1] == doctest::Approx(0.0 - 0.25 * 0.2));
}

TEST_CASE("non-finite action is an input error") {
  auto env = make_env("pendulum");
  Rng rng = Rng::seeded(0);
  env->reset(rng);
  CHECK_THROWS_AS(env->step({1.0, 0.0, 0.0}, {std::nan("")}, rng),
                  std::invalid_argument);
}

TEST_CASE("chain transitions match the stored tensor (chi-square)") {
  auto env = make_env("chain");
  Rng rng = Rng::seeded(77);
  env->reset(rng);
  // state index 2 of 5 -> obs 0.0; action right
  const int draws = 100000;
  std::vector<long> counts(5, 0);
  for (int i = 0; i < draws; ++i) {
    auto r = env->step({0.0}, {1.0}, rng);
    const int idx =
        static_cast<int>(std::lround((r.tr.next_state[0] + 1.0) * 2.0));
    counts[idx]++;
  }
  // chain(5, slip=0.1): from s=2 with right, P(3)=0.9, P(2)=0.1
  std::vector<double> probs = {0.0, 0.0, 0.1, 0.9, 0.0};
  // restrict to supported outcomes for the statistic
  std::vector<long> c2 = {counts[2], counts[3]};
  std::vector<double> p2 = {0.1, 0.9};
  CHECK(counts[0] + counts[1] + counts[4] == 0);
  CHECK(testsup::chi2_stat(c2, p2, draws) < testsup::chi2_crit_99(1));
}

TEST_CASE("termination predicates") {
  SUBCASE("NT variants never terminate") {
    for (const char* name : {"pendulum", "pointmass-nt", "chain"}) {
      auto env = make_env(name);
      Rng rng = Rng::seeded(5);
      for (int i = 0; i < 100; ++i) {
        std::vector<double> s(env->spec().state_dim);
        for (auto& v : s) v = rng.uniform(-3, 3);
        CHECK_FALSE(env->termination(s));
      }
    }
  }
  SUBCASE("point-mass out of arena is terminal") {
    auto env = make_env("pointmass");
    CHECK(env->termination({2.5, 0.0, 0.0, 0.0}));
    CHECK(env->termination({0.0, -2.1, 0.0, 0.0}));
    CHECK_FALSE(env->termination({0.0, 0.0, 1.0, 1.0}));
  }
  SUBCASE("step done flags agree with the predicate on random transitions") {
    auto env = make_env("pointmass");
    Rng rng = Rng::seeded(123);
    auto s = env->reset(rng);
    for (int i = 0; i < 10000; ++i) {
      std::vector<double> a = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
      auto r = env->step(s, a, rng);
      CHECK(r.tr.done == env->termination(r.tr.next_state));
      s = r.episode_over() ? env->reset(rng) : r.tr.next_state;
    }
  }
}

TEST_CASE("rewards stay within the declared bound") {
  for (const char* name : {"pendulum", "pointmass", "pointmass-nt", "chain"}) {
    auto env = make_env(name);
    Rng rng = Rng::seeded(9);
    auto s = env->reset(rng);
    for (int i = 0; i < 5000; ++i) {
      std::vector<double> a(env->spec().action_dim);
      for (auto& v : a) v = rng.uniform(-2, 2);
      auto r = env->step(s, a, rng);
      CHECK(std::abs(r.tr.reward) <= env->spec().r_max);
      s = r.episode_over() ? env->reset(rng) : r.tr.next_state;
    }
  }
}

TEST_CASE("exact return") {
  SUBCASE("zero rewards give zero return") {
    TabularMDP m = TabularMDP::chain(4);
    std::fill(m.r.begin(), m.r.end(), 0.0);
    std::vector<double> pol(4 * 2, 0.5);
    CHECK(exact_return(m, pol) == doctest::Approx(0.0));
  }
  SUBCASE("single state single action geometric series") {
    TabularMDP m;
    m.n_states = 1;
    m.n_actions = 1;
    m.gamma = 0.9;
    m.P = {1.0};
    m.r = {1.0};
    m.rho0 = {1.0};
    std::vector<double> pol = {1.0};
    CHECK(exact_return(m, pol) == doctest::Approx(10.0).epsilon(1e-10));
  }
  SUBCASE("non-stochastic policy is an input error") {
    TabularMDP m = TabularMDP::chain(3);
    std::vector<double> pol(3 * 2, 0.4);
    CHECK_THROWS_AS((void)exact_return(m, pol), std::invalid_argument);
  }
  SUBCASE("matches Monte-Carlo on a random 5-state MDP") {
    Rng rng = Rng::seeded(2024);
    TabularMDP m;
    m.n_states = 5;
    m.n_actions = 2;
    m.gamma = 0.8;
    m.P.assign(5 * 2 * 5, 0.0);
    m.r.assign(5 * 2, 0.0);
    m.rho0.assign(5, 0.2);
    for (int s = 0; s < 5; ++s)
      for (int a = 0; a < 2; ++a) {
        double tot = 0.0;
        std::vector<double> w(5);
        for (auto& v : w) {
          v = -std::log(1.0 - rng.uniform01());
          tot += v;
        }
        for (int s2 = 0; s2 < 5; ++s2) m.p(s, a, s2) = w[s2] / tot;
        m.reward(s, a) = rng.uniform(-1, 1);
      }
    m.validate();
    std::vector<double> pol(5 * 2);
    for (int s = 0; s < 5; ++s) {
      const double p0 = rng.uniform(0.05, 0.95);
      pol[s * 2] = p0;
      pol[s * 2 + 1] = 1.0 - p0;
    }

    const double eta = exact_return(m, pol);

    // Monte-Carlo oracle: horizon long enough that the discounted tail
    // is far below the standard error.
    const int episodes = 1000000;
    const int horizon = 120;  // 0.8^120 ~ 2e-12
    double sum = 0.0, sumsq = 0.0;
    for (int e = 0; e < episodes; ++e) {
      double u = rng.uniform01();
      int s = 0;
      double acc = 0.0;
      for (int i = 0; i < 5; ++i) {
        acc += m.rho0[i];
        if (u <= acc) {
          s = i;
          break;
        }
      }
      double g = 0.0, disc = 1.0;
      for (int t = 0; t < horizon; ++t) {
        const int a = rng.uniform01() < pol[s * 2] ? 0 : 1;
        g += disc * m.reward(s, a);
        disc *= m.gamma;
        const double u2 = rng.uniform01();
        double acc2 = 0.0;
        int s2 = 4;
        for (int j = 0; j < 5; ++j) {
          acc2 += m.p(s, a, j);
          if (u2 <= acc2) {
            s2 = j;
            break;
          }
        }
        s = s2;
      }
      sum += g;
      sumsq += g * g;
    }
    const double mc = sum / episodes;
    const double var = sumsq / episodes - mc * mc;
    const double se = std::sqrt(var / episodes);
    CHECK(std::abs(eta - mc) < 3.0 * se);
  }
}

TEST_CASE("tabular mdp validation") {
  TabularMDP m = TabularMDP::chain(3);
  SUBCASE("valid chain passes") { CHECK_NOTHROW(m.validate()); }
  SUBCASE("broken row fails") {
    m.p(0, 0, 0) += 0.1;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  }
  SUBCASE("gamma bounds") {
    m.gamma = 1.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  }
}
