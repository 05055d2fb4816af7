#include "bifrl/buffers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bifrl/net.hpp"

namespace bifrl {

std::vector<std::vector<double>> aggregate_states(
    const TransitionBuffer& d_env, const std::vector<std::vector<double>>& gen,
    double ratio, size_t window, int state_dim) {
  if (d_env.empty())
    throw std::runtime_error("aggregate_states: empty environment buffer");
  const size_t n = d_env.size();
  const size_t take = std::min(window, n);
  std::vector<std::vector<double>> out;
  out.reserve(take + gen.size());
  for (size_t i = n - take; i < n; ++i) {
    const auto& s = d_env.at(i).next_state;
    out.push_back(s);
  }
  const size_t want_gen =
      static_cast<size_t>(std::llround(ratio * static_cast<double>(take)));
  size_t added = 0;
  for (const auto& s : gen) {
    if (added >= want_gen) break;
    if (static_cast<int>(s.size()) != state_dim || !all_finite(s)) continue;
    out.push_back(s);
    ++added;
  }
  return out;
}

std::vector<size_t> select_top_k(const std::vector<double>& values,
                                 double k_percent) {
  if (values.empty()) throw std::invalid_argument("select_top_k: empty input");
  if (k_percent <= 0.0 || k_percent > 100.0)
    throw std::invalid_argument("select_top_k: K out of (0,100]");
  const size_t n = values.size();
  const size_t k = static_cast<size_t>(
      std::ceil(k_percent / 100.0 * static_cast<double>(n)));
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return values[a] > values[b];
  });
  idx.resize(std::max<size_t>(1, std::min(k, n)));
  return idx;
}

std::vector<double> boltzmann_probs(const std::vector<double>& values,
                                    const std::vector<double>& td_priority,
                                    double beta) {
  if (values.size() != td_priority.size() || values.empty())
    throw std::invalid_argument("boltzmann_probs: shape mismatch");
  if (beta <= 0.0 || beta >= 1.0)
    throw std::invalid_argument("boltzmann_probs: beta out of (0,1)");
  const size_t n = values.size();
  std::vector<double> logits(n);
  double mx = -1e300;
  for (size_t i = 0; i < n; ++i) {
    logits[i] = beta * values[i] + (1.0 - beta) * td_priority[i];
    mx = std::max(mx, logits[i]);
  }
  double z = 0.0;
  for (size_t i = 0; i < n; ++i) {
    logits[i] = std::exp(logits[i] - mx);
    z += logits[i];
  }
  for (size_t i = 0; i < n; ++i) logits[i] /= z;
  return logits;
}

std::vector<size_t> boltzmann_sample(const std::vector<double>& probs,
                                     size_t m, Rng& rng) {
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    cdf[i] = acc;
  }
  std::vector<size_t> out;
  out.reserve(m);
  for (size_t i = 0; i < m; ++i) {
    const double u = rng.uniform01() * acc;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    out.push_back(std::min<size_t>(
        static_cast<size_t>(it - cdf.begin()), probs.size() - 1));
  }
  return out;
}

}  // namespace bifrl
