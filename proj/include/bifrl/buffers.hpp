#ifndef BIFRL_BUFFERS_HPP
#define BIFRL_BUFFERS_HPP

// Replay storage and the two start-state prioritization strategies:
// greedy top-K by value and Boltzmann sampling over value/TD priority.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bifrl/envs.hpp"
#include "bifrl/rng.hpp"

namespace bifrl {

// FIFO ring buffer with value-copy sampling.
template <typename T>
class RingBuffer {
 public:
  explicit RingBuffer(size_t capacity = 0) : capacity_(capacity) {}

  void set_capacity(size_t c) { capacity_ = c; }
  size_t capacity() const { return capacity_; }
  size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  int64_t total_added() const { return total_added_; }
  void set_total_added(int64_t n) { total_added_ = n; }

  void add(T item) {
    ++total_added_;
    if (capacity_ == 0) return;
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  void clear() {
    items_.clear();
    head_ = 0;
  }

  // Oldest-first logical index.
  const T& at(size_t i) const {
    return items_[(head_ + i) % items_.size()];
  }

  // Uniform mini-batch with replacement; copies.
  std::vector<T> sample_batch(size_t batch, Rng& rng) const {
    if (empty()) throw std::runtime_error("sampling from empty buffer");
    std::vector<T> out;
    out.reserve(batch);
    for (size_t i = 0; i < batch; ++i)
      out.push_back(at(static_cast<size_t>(rng.uniform_int(
          static_cast<int>(items_.size())))));
    return out;
  }

 private:
  size_t capacity_ = 0;
  size_t head_ = 0;
  int64_t total_added_ = 0;
  std::vector<T> items_;
};

// (state, action) demonstration pair from a backward rollout trace,
// stored in forward temporal order.
struct Demo {
  std::vector<double> state;
  std::vector<double> action;
};

using TransitionBuffer = RingBuffer<Transition>;
using DemoBuffer = RingBuffer<Demo>;

// A candidate rollout start state with its value and TD priority.
struct PrioritizedState {
  std::vector<double> state;
  double value = 0.0;
  double td_priority = 0.0;
};

// Concatenates up to `window` most recent D_env next-states with
// ratio * n_env generated states. Every entry is validated to be finite
// and state_dim long; offending generated states are rejected.
std::vector<std::vector<double>> aggregate_states(
    const TransitionBuffer& d_env, const std::vector<std::vector<double>>& gen,
    double ratio, size_t window, int state_dim);

// Indices of the ceil(K/100 * n) largest values, ties broken by earlier
// index. 0 < K <= 100.
std::vector<size_t> select_top_k(const std::vector<double>& values,
                                 double k_percent);

// Normalized Boltzmann probabilities p_j ~ exp(beta*V_j + (1-beta)*delta_j),
// max-subtracted before exponentiation.
std::vector<double> boltzmann_probs(const std::vector<double>& values,
                                    const std::vector<double>& td_priority,
                                    double beta);

// m independent categorical draws (with replacement) from probs.
std::vector<size_t> boltzmann_sample(const std::vector<double>& probs,
                                     size_t m, Rng& rng);

}  // namespace bifrl

#endif
