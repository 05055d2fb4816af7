#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bifrl/buffers.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bifrl;

namespace {
Transition make_tr(double v, int dim = 2) {
  Transition t;
  t.state.assign(dim, v);
  t.action.assign(1, v);
  t.reward = v;
  t.next_state.assign(dim, v);
  t.done = false;
  return t;
}
}  // namespace

TEST_CASE("ring buffer FIFO semantics") {
  TransitionBuffer buf(1);
  buf.add(make_tr(1.0));
  buf.add(make_tr(2.0));
  CHECK(buf.size() == 1);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.total_added() == 2);
}

TEST_CASE("sampling from an empty buffer is an error") {
  TransitionBuffer buf(4);
  Rng rng = Rng::seeded(0);
  CHECK_THROWS_AS((void)buf.sample_batch(1, rng), std::runtime_error);
}

TEST_CASE("sampled batches are value copies") {
  TransitionBuffer buf(4);
  buf.add(make_tr(1.0));
  Rng rng = Rng::seeded(0);
  auto batch = buf.sample_batch(1, rng);
  batch[0].reward = 99.0;
  batch[0].state[0] = 99.0;
  CHECK(buf.at(0).reward == 1.0);
  CHECK(buf.at(0).state[0] == 1.0);
}

TEST_CASE("uniform batch sampling passes chi-square") {
  TransitionBuffer buf(8);
  for (int i = 0; i < 8; ++i) buf.add(make_tr(i));
  Rng rng = Rng::seeded(42);
  const int draws = 100000;
  std::vector<long> counts(8, 0);
  auto batch = buf.sample_batch(draws, rng);
  for (const auto& t : batch) counts[static_cast<int>(t.reward)]++;
  std::vector<double> probs(8, 1.0 / 8);
  CHECK(testsup::chi2_stat(counts, probs, draws) < testsup::chi2_crit_99(7));
}

TEST_CASE("aggregate_states") {
  TransitionBuffer d_env(1000);
  for (int i = 0; i < 100; ++i) d_env.add(make_tr(i, 3));

  SUBCASE("ratio zero keeps only env states") {
    auto out = aggregate_states(d_env, {}, 0.0, 10000, 3);
    CHECK(out.size() == 100);
  }
  SUBCASE("ratio one doubles the collection") {
    std::vector<std::vector<double>> gen(100, std::vector<double>(3, 0.5));
    auto out = aggregate_states(d_env, gen, 1.0, 10000, 3);
    CHECK(out.size() == 200);
  }
  SUBCASE("entries are finite and state_dim long") {
    std::vector<std::vector<double>> gen(120, std::vector<double>(3, 0.5));
    gen[3] = {std::nan(""), 0.0, 0.0};  // rejected
    gen[5] = {1.0};                     // wrong width, rejected
    auto out = aggregate_states(d_env, gen, 1.0, 10000, 3);
    CHECK(out.size() == 200);
    for (const auto& s : out) {
      CHECK(s.size() == 3);
      for (double v : s) CHECK(std::isfinite(v));
    }
  }
  SUBCASE("window limits the env contribution") {
    auto out = aggregate_states(d_env, {}, 0.0, 10, 3);
    CHECK(out.size() == 10);
    // the most recent states are kept
    CHECK(out.back()[0] == 99.0);
    CHECK(out.front()[0] == 90.0);
  }
  SUBCASE("empty env buffer is an error") {
    TransitionBuffer empty(10);
    CHECK_THROWS_AS((void)aggregate_states(empty, {}, 1.0, 10, 3),
                    std::runtime_error);
  }
}

TEST_CASE("select_top_k") {
  SUBCASE("K = 100 returns everything") {
    std::vector<double> v = {3, 1, 2};
    auto idx = select_top_k(v, 100.0);
    CHECK(idx.size() == 3);
  }
  SUBCASE("hand instance: values [3,1,2,5,4], K=40 -> values 5 and 4") {
    std::vector<double> v = {3, 1, 2, 5, 4};
    auto idx = select_top_k(v, 40.0);
    REQUIRE(idx.size() == 2);
    CHECK(v[idx[0]] == 5);
    CHECK(v[idx[1]] == 4);
  }
  SUBCASE("output never empty") {
    std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(select_top_k(v, 1.0).size() == 1);
  }
  SUBCASE("ties broken by earlier index") {
    std::vector<double> v = {2, 5, 5, 1};
    auto idx = select_top_k(v, 50.0);
    REQUIRE(idx.size() == 2);
    CHECK(idx[0] == 1);
    CHECK(idx[1] == 2);
  }
  SUBCASE("equals brute-force sort prefix on random instances") {
    Rng rng = Rng::seeded(314);
    for (int inst = 0; inst < 1000; ++inst) {
      const int n = 1 + rng.uniform_int(1000);
      std::vector<double> v(n);
      for (auto& x : v) x = rng.uniform(-10, 10);
      const double kpct = rng.uniform(0.001, 100.0);
      auto got = select_top_k(v, kpct);

      // brute-force oracle: stable descending sort, take ceil(k/100*n)
      std::vector<size_t> order(n);
      std::iota(order.begin(), order.end(), size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](size_t a, size_t b) { return v[a] > v[b]; });
      size_t k = static_cast<size_t>(std::ceil(kpct / 100.0 * n));
      k = std::max<size_t>(1, std::min<size_t>(k, n));
      order.resize(k);
      CHECK(got == order);
    }
  }
}

TEST_CASE("boltzmann distribution") {
  SUBCASE("equal priorities are uniform") {
    std::vector<double> v(5, 1.3), d(5, 0.4);
    auto p = boltzmann_probs(v, d, 0.7);
    for (double x : p) CHECK(x == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("two-state hand value") {
    // beta=0.7, V=[1,0], delta=[0,1]:
    // p1 = e^0.7 / (e^0.7 + e^0.3)
    auto p = boltzmann_probs({1.0, 0.0}, {0.0, 1.0}, 0.7);
    const double want =
        std::exp(0.7) / (std::exp(0.7) + std::exp(0.3));
    CHECK(p[0] == doctest::Approx(want).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(0.5987).epsilon(1e-4));
  }
  SUBCASE("probabilities sum to one within 1e-12") {
    Rng rng = Rng::seeded(8);
    for (int inst = 0; inst < 50; ++inst) {
      const int n = 1 + rng.uniform_int(200);
      std::vector<double> v(n), d(n);
      for (auto& x : v) x = rng.uniform(-50, 50);
      for (auto& x : d) x = rng.uniform(0, 50);
      auto p = boltzmann_probs(v, d, 0.7);
      double tot = 0.0;
      for (double x : p) tot += x;
      CHECK(std::abs(tot - 1.0) < 1e-12);
    }
  }
  SUBCASE("shift invariance") {
    std::vector<double> v = {1.0, -2.0, 0.3}, d = {0.1, 0.0, 2.0};
    auto p1 = boltzmann_probs(v, d, 0.7);
    for (auto& x : v) x += 1000.0;   // shifts all logits by beta*1000
    auto p2 = boltzmann_probs(v, d, 0.7);
    for (size_t i = 0; i < p1.size(); ++i)
      CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-9));
  }
  SUBCASE("huge priorities do not overflow") {
    auto p = boltzmann_probs({1e6, 0.0}, {0.0, 0.0}, 0.7);
    CHECK(std::isfinite(p[0]));
    CHECK(p[0] == doctest::Approx(1.0));
  }
  SUBCASE("empirical frequencies pass chi-square against the definition") {
    Rng rng = Rng::seeded(99);
    for (int inst = 0; inst < 10; ++inst) {
      const int n = 2 + rng.uniform_int(9);
      std::vector<double> v(n), d(n);
      for (auto& x : v) x = rng.uniform(-2, 2);
      for (auto& x : d) x = rng.uniform(0, 2);
      auto p = boltzmann_probs(v, d, 0.7);
      const int draws = 100000;
      auto idx = boltzmann_sample(p, draws, rng);
      std::vector<long> counts(n, 0);
      for (size_t i : idx) counts[i]++;
      CHECK(testsup::chi2_stat(counts, p, draws) <
            testsup::chi2_crit_99(n - 1));
    }
  }
  SUBCASE("beta bounds enforced") {
    CHECK_THROWS_AS((void)boltzmann_probs({1.0}, {1.0}, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)boltzmann_probs({1.0}, {1.0}, 1.0),
                    std::invalid_argument);
  }
}
