#pragma once

#include <span>

#include "splab/algos/common.hpp"

namespace splab {

// Generalized advantage estimates by backward recursion:
//   delta_t = r_t + gamma * next_values_t * (1 - d_t) - values_t
//   A_t     = delta_t + gamma * lam * (1 - d_t) * A_{t+1}
// `dones` marks true terminals. `episode_ends`, when non-empty, also cuts the
// accumulation (time-limit truncation) while keeping the bootstrap value.
Vector gae(const Vector& rewards, const Vector& values, const Vector& next_values, const Vector& dones, double gamma,
           double lam, const Vector& episode_ends = {});

// Row-wise log-softmax.
Matrix log_softmax(const Matrix& logits);

struct PpoLoss {
  double surrogate = 0.0;  // -mean(min(r A, clip(r) A))
  double entropy = 0.0;    // mean policy entropy
  double penalty = 0.0;    // lambda_c * penalty / b
  double total = 0.0;      // surrogate - entropy_coef * entropy + penalty
  double clip_fraction = 0.0;
  Matrix logits_grad;      // d (surrogate - entropy_coef * entropy) / d logits
};

// Clipped surrogate loss for a categorical policy. The ratio is
// exp(logprob - old_logprob).
PpoLoss ppo_loss(const Matrix& logits, std::span<const int> actions, const Vector& old_logprobs,
                 const Vector& advantages, double clip, double entropy_coef, const Network& policy, Regularizer reg,
                 double lambda_c);

// Clipped-surrogate PPO with a separate value network. `episodes` counts
// training iterations of `rollout_steps` environment steps each.
RunRecord train_ppo(const AlgoConfig& cfg, const RunObserver& observer = {});

}  // namespace splab
