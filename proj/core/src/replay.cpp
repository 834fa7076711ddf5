#include "splab/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splab {

double priority_of(double td, double alpha) {
  if (alpha < 0.0) throw InvalidArgument("priority exponent must be non-negative");
  if (alpha == 0.0) return 1.0;
  return std::pow(std::abs(td), alpha);
}

std::vector<double> priority_probabilities(std::span<const double> priorities, PriorityMode mode) {
  std::vector<double> p(priorities.begin(), priorities.end());
  if (p.empty()) return p;
  if (mode == PriorityMode::softmax) {
    const double top = *std::max_element(p.begin(), p.end());
    double total = 0.0;
    for (double& x : p) total += (x = std::exp(x - top));
    for (double& x : p) x /= total;
  } else {
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (total <= 0.0) {
      std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    } else {
      for (double& x : p) x /= total;
    }
  }
  return p;
}

std::vector<GoalTransition> her_relabel(std::span<const GoalTransition> episode, HerStrategy strategy,
                                        int k_future, Rng& rng, const GoalReward& reward_fn) {
  if (episode.empty()) throw InvalidArgument("cannot relabel an empty episode");
  if (!reward_fn.reward) throw InvalidArgument("relabeling needs a reward function");
  const std::size_t T = episode.size();
  std::vector<GoalTransition> out;
  out.reserve(strategy == HerStrategy::future ? T * static_cast<std::size_t>(std::max(k_future, 0)) : T);

  auto relabel = [&](const GoalTransition& src, const Vector& goal) {
    GoalTransition t = src;
    t.desired_goal = goal;
    t.base.reward = reward_fn.reward(t.achieved_goal_next, goal);
    if (reward_fn.terminal) t.base.done = reward_fn.terminal(t.achieved_goal_next, goal);
    out.push_back(std::move(t));
  };

  for (std::size_t t = 0; t < T; ++t) {
    if (strategy == HerStrategy::final) {
      relabel(episode[t], episode.back().achieved_goal_next);
      continue;
    }
    for (int j = 0; j < k_future; ++j) {
      // Later timestep; the last transition can only pick itself.
      const std::size_t future = t + 1 < T ? t + 1 + rng.index(T - t - 1) : t;
      relabel(episode[t], episode[future].achieved_goal_next);
    }
  }
  return out;
}

void DemoBuffer::push(Vector query, Vector action) {
  if (queries_.size() < capacity_) {
    queries_.push_back(std::move(query));
    actions_.push_back(std::move(action));
  } else {
    queries_[head_] = std::move(query);
    actions_[head_] = std::move(action);
    head_ = (head_ + 1) % capacity_;
  }
}

std::vector<std::size_t> DemoBuffer::sample_indices(std::size_t b, Rng& rng) const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  if (b >= idx.size()) return idx;
  for (std::size_t i = 0; i < b; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
  idx.resize(b);
  return idx;
}

KnnWeights knn_weights(const DemoBuffer& demos, std::span<const std::size_t> candidates, const Vector& query,
                       int k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (candidates.size() < static_cast<std::size_t>(k)) {
    throw InvalidArgument("need at least " + std::to_string(k) + " demonstrations, have " +
                          std::to_string(candidates.size()));
  }
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(candidates.size());
  for (std::size_t c : candidates) {
    const Vector& q = demos.query(c);
    if (q.size() != query.size()) throw ShapeError("demo query dimension mismatch");
    dist.emplace_back((q - query).norm(), c);
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

  KnnWeights w;
  // Shift by the nearest distance; the ratio is unchanged and exp cannot underflow to 0/0.
  const double d0 = dist.front().first;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    w.neighbours.push_back(dist[static_cast<std::size_t>(i)].second);
    const double e = std::exp(-(dist[static_cast<std::size_t>(i)].first - d0));
    w.weights.push_back(e);
    total += e;
  }
  for (double& x : w.weights) x /= total;
  return w;
}

Vector knn_expert_action(const DemoBuffer& demos, std::span<const std::size_t> candidates, const Vector& query,
                         int k) {
  const KnnWeights w = knn_weights(demos, candidates, query, k);
  Vector a = Vector::Zero(demos.action(w.neighbours.front()).size());
  for (std::size_t i = 0; i < w.neighbours.size(); ++i) a += w.weights[i] * demos.action(w.neighbours[i]);
  return a;
}

Vector knn_expert_action(const DemoBuffer& demos, const Vector& query, int k) {
  std::vector<std::size_t> all(demos.size());
  std::iota(all.begin(), all.end(), 0);
  return knn_expert_action(demos, all, query, k);
}

}  // namespace splab
