#pragma once

#include <span>
#include <vector>

#include "splab/algos/common.hpp"

namespace splab {

// Column-stacked view of a transition batch.
struct TransitionBatch {
  Matrix states;       // [b x obs]
  std::vector<int> actions;
  Vector rewards;
  Matrix next_states;  // [b x obs]
  Vector dones;        // 1 for terminal transitions

  static TransitionBatch from(std::span<const Transition> transitions);
  std::size_t size() const { return actions.size(); }
};

enum class DqnVariant { dqn, ddqn };

// Bellman targets from precomputed next-state Q values:
//   dqn:  r + gamma * max_a Qt(s', a) * (1 - d)
//   ddqn: r + gamma * Qt(s', argmax_a Q(s', a)) * (1 - d)
// `next_q_online` is only read for ddqn.
Vector dqn_target(const Matrix& next_q_target, const Matrix& next_q_online, const Vector& rewards,
                  const Vector& dones, double gamma, DqnVariant variant);

// Same, evaluating the networks on the batch's next states.
Vector dqn_target(const TransitionBatch& batch, const Network& target, double gamma, DqnVariant variant,
                  const Network& online, GateMode mode, Rng& rng);

struct DqnLoss {
  double task = 0.0;     // mean squared TD error
  double penalty = 0.0;  // lambda_c * penalty / b (0 when sparsity is off)
  double total = 0.0;
  Matrix output_grad;    // d task / d Q, [b x actions]
  Vector td;             // target - Q(s)[a]
};

// Task loss and its gradient w.r.t. the network output. The sparsity term
// reads the network's gates (l0) or weights (l1/l2).
DqnLoss dqn_loss(const Matrix& q, std::span<const int> actions, const Vector& targets, const Network& online,
                 Regularizer reg, double lambda_c);

// DQN / DDQN with optional sparsification. DDQN samples from a
// prioritized buffer.
RunRecord train_dqn(const AlgoConfig& cfg, const RunObserver& observer = {});

}  // namespace splab
