#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "splab/errors.hpp"
#include "splab/random.hpp"
#include "splab/tensor.hpp"

namespace splab {

struct Transition {
  Vector state;
  Vector action;  // discrete actions store the index in action(0)
  double reward = 0.0;
  Vector next_state;
  bool done = false;  // true terminal; bootstrapping is masked
};

struct GoalTransition {
  Transition base;  // states exclude the goal
  Vector desired_goal;
  Vector achieved_goal;
  Vector achieved_goal_next;
};

// Fixed-capacity FIFO ring with optional per-entry priorities.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, bool prioritized = false)
      : capacity_(capacity), prioritized_(prioritized) {
    if (capacity == 0) throw InvalidArgument("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(T item) {
    const double p = items_.empty() ? 1.0 : max_priority_;
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
      if (prioritized_) priorities_.push_back(p);
    } else {
      items_[head_] = std::move(item);
      if (prioritized_) priorities_[head_] = p;
      head_ = (head_ + 1) % capacity_;
    }
    if (prioritized_ && p > max_priority_) max_priority_ = p;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool prioritized() const { return prioritized_; }
  bool empty() const { return items_.empty(); }

  // i-th oldest entry.
  const T& at(std::size_t i) const { return items_.at(physical(i)); }
  // Physical slot access, as returned by sample_prioritized.
  const T& slot(std::size_t s) const { return items_.at(s); }

  double priority(std::size_t slot) const { return priorities_.at(slot); }
  std::span<const double> priorities() const { return priorities_; }
  double max_priority() const { return max_priority_; }

  void set_priority(std::size_t slot, double p) {
    if (!prioritized_) throw ProtocolError("buffer is not prioritized");
    if (!(p >= 0.0)) throw InvalidArgument("priorities must be non-negative");
    priorities_.at(slot) = p;
    if (p > max_priority_) max_priority_ = p;
  }

  // Physical slot of the i-th oldest entry.
  std::size_t physical(std::size_t i) const {
    if (i >= items_.size()) throw std::out_of_range("replay index");
    return items_.size() < capacity_ ? i : (head_ + i) % capacity_;
  }

 private:
  std::size_t capacity_;
  bool prioritized_;
  std::vector<T> items_;
  std::vector<double> priorities_;
  std::size_t head_ = 0;  // oldest slot once full
  double max_priority_ = 1.0;
};

// b independent uniform draws with replacement. Throws ProtocolError when
// the buffer holds fewer than b entries.
template <class T>
std::vector<T> sample_uniform(const ReplayBuffer<T>& buffer, std::size_t b, Rng& rng) {
  if (b == 0) return {};
  if (buffer.size() < b) throw ProtocolError("replay buffer not ready");
  std::vector<T> out;
  out.reserve(b);
  for (std::size_t i = 0; i < b; ++i) out.push_back(buffer.slot(rng.index(buffer.size())));
  return out;
}

// |td|^alpha
double priority_of(double td, double alpha);

enum class PriorityMode { softmax, proportional };

// Sampling distribution over the priorities.
std::vector<double> priority_probabilities(std::span<const double> priorities, PriorityMode mode);

template <class T>
struct PrioritizedBatch {
  std::vector<T> items;
  std::vector<std::size_t> slots;
};

template <class T>
PrioritizedBatch<T> sample_prioritized(const ReplayBuffer<T>& buffer, std::size_t b, Rng& rng,
                                       PriorityMode mode = PriorityMode::softmax) {
  if (!buffer.prioritized()) throw ProtocolError("buffer is not prioritized");
  PrioritizedBatch<T> out;
  if (b == 0) return out;
  if (buffer.size() < b) throw ProtocolError("replay buffer not ready");
  const auto probs = priority_probabilities(buffer.priorities(), mode);
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) cdf[i] = (acc += probs[i]);
  for (std::size_t i = 0; i < b; ++i) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    auto slot = static_cast<std::size_t>(it - cdf.begin());
    if (slot >= cdf.size()) slot = cdf.size() - 1;
    out.slots.push_back(slot);
    out.items.push_back(buffer.slot(slot));
  }
  return out;
}

enum class HerStrategy { future, final };

struct GoalReward {
  std::function<double(const Vector& achieved, const Vector& goal)> reward;
  std::function<bool(const Vector& achieved, const Vector& goal)> terminal;
};

// Extra copies of each transition with the goal replaced by an achieved
// goal (a later timestep for `future`, the last one for `final`); reward and
// terminal flag are recomputed, states and actions are left untouched.
std::vector<GoalTransition> her_relabel(std::span<const GoalTransition> episode, HerStrategy strategy,
                                        int k_future, Rng& rng, const GoalReward& reward_fn);

// (state || goal, action) pairs from an expert.
class DemoBuffer {
 public:
  explicit DemoBuffer(std::size_t capacity = 5000) : capacity_(capacity) {}

  void push(Vector query, Vector action);
  std::size_t size() const { return queries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Vector& query(std::size_t i) const { return queries_.at(i); }
  const Vector& action(std::size_t i) const { return actions_.at(i); }

  // Indices of a uniform sample without replacement (all, if b >= size).
  std::vector<std::size_t> sample_indices(std::size_t b, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Vector> queries_;
  std::vector<Vector> actions_;
};

struct KnnWeights {
  std::vector<std::size_t> neighbours;
  std::vector<double> weights;  // convex
};

// Nearest `k` demos to `query` (Euclidean) and their exp(-distance) weights.
KnnWeights knn_weights(const DemoBuffer& demos, std::span<const std::size_t> candidates, const Vector& query,
                       int k);

// Distance-weighted expert action over the k nearest demos.
Vector knn_expert_action(const DemoBuffer& demos, const Vector& query, int k);
Vector knn_expert_action(const DemoBuffer& demos, std::span<const std::size_t> candidates, const Vector& query,
                         int k);

}  // namespace splab
