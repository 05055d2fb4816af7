#ifndef BIFRL_RNG_HPP
#define BIFRL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace bifrl {

// mt19937_64 with explicit sampling recipes on top. Distributions are
// implemented without hidden caches so an engine snapshot captures the
// full sampler state (std::normal_distribution keeps a spare draw,
// which would break bit-exact checkpoint resume).
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // in [0, 1)
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller, cache-free: two uniforms per draw.
  double normal() {
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  void fill_normal(double* x, int n) {
    for (int i = 0; i < n; ++i) x[i] = normal();
  }

  // in [0, n)
  int uniform_int(int n) {
    return static_cast<int>(uniform01() * static_cast<double>(n)) % n;
  }

  // Derive an independent stream; mixing based on splitmix64.
  Rng derive(uint64_t stream) const {
    uint64_t z = seed_mix_ + stream * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z = z ^ (z >> 31);
    Rng r(z);
    r.seed_mix_ = z;
    return r;
  }

  static Rng seeded(uint64_t seed) {
    Rng r(seed);
    r.seed_mix_ = seed;
    return r;
  }

  std::string save_state() const {
    std::ostringstream os;
    os << eng_ << ' ' << seed_mix_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_ >> seed_mix_;
  }

  bool operator==(const Rng& o) const {
    return eng_ == o.eng_ && seed_mix_ == o.seed_mix_;
  }

 private:
  std::mt19937_64 eng_;
  uint64_t seed_mix_ = 0;
};

}  // namespace bifrl

#endif
