#pragma once

#include <span>

#include "splab/algos/common.hpp"

namespace splab {

// Goal transitions laid out as network inputs (state || goal).
struct GoalBatch {
  Matrix inputs;       // [b x (obs + goal)]
  Matrix actions;      // [b x act]
  Vector rewards;
  Matrix next_inputs;  // [b x (obs + goal)]
  Vector dones;

  static GoalBatch from(std::span<const GoalTransition> transitions);
  Eigen::Index size() const { return inputs.rows(); }
};

struct DdpgParams {
  double gamma = 0.99;
  double dex_alpha = 5.0;
  Regularizer sparsity = Regularizer::none;
  double lambda_c = 0.0;
};

struct DdpgLosses {
  double actor = 0.0;   // -mean(Q(s, pi(s)) - alpha * |pi(s) - pi_e(s)|) + penalty
  double critic = 0.0;  // mean (Q(s, a) - y)^2 + penalty
  double actor_penalty = 0.0;
  double critic_penalty = 0.0;
  Vector targets;       // y
  Gradients actor_grads;
  Gradients critic_grads;
};

// Actor outputs pass through tanh. Critic input is (state || goal || action).
// y = r + (1 - d) * (gamma * Qt(s', pi_t(s')) - alpha * |pi_t(s') - pi_e(s')|).
// `expert` and `expert_next` hold the expert's actions for the batch inputs and
// next inputs; both are required (InvalidArgument when empty).
DdpgLosses ddpg_losses(const GoalBatch& batch, const Network& actor, const Network& critic,
                       const Network& target_actor, const Network& target_critic, const Matrix& expert,
                       const Matrix& expert_next, const DdpgParams& params, GateMode mode, Rng& rng);

// Rolls the scripted expert from perturbed trajectories until `demos` is full.
// Each pair stores (position || goal) and the clean expert action.
void fill_demos(DemoBuffer& demos, const std::string& env, double perturbation, Rng& rng);

// Expert actions for every row of `inputs`, from the k nearest demos among
// `candidates`.
Matrix expert_actions(const DemoBuffer& demos, std::span<const std::size_t> candidates, const Matrix& inputs, int k);

// DDPG with hindsight relabeling and the kNN demonstration regularizer.
// `demos` is used as given when non-null and non-empty; otherwise a buffer is
// filled from the scripted expert. The record carries the demo buffer.
RunRecord train_ddpg_her_dex(const AlgoConfig& cfg, const RunObserver& observer = {},
                             const DemoBuffer* demos = nullptr);

}  // namespace splab
