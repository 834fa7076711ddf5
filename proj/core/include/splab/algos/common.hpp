#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splab/envs.hpp"
#include "splab/gates.hpp"
#include "splab/network.hpp"
#include "splab/replay.hpp"

namespace splab {

enum class Algo { dqn, ddqn, ppo, ddpg_her_dex };

std::string to_string(Algo a);
Algo algo_from_string(const std::string& name);

struct AlgoConfig {
  Algo algo = Algo::dqn;
  std::string env = "cartpole";
  std::uint64_t seed = 0;
  int episodes = 2000;  // PPO: training iterations

  double gamma = 0.99;
  int batch = 64;

  Regularizer sparsity = Regularizer::none;
  double lambda_c = 0.0;
  GateConfig gate{};
  double log_alpha_init = 2.4;

  std::vector<int> hidden{64, 160};
  double learning_rate = 1e-3;
  double gate_learning_rate = 1e-2;  // Adam rate for log alpha; 0 means learning_rate

  int eval_every = 10;
  int eval_episodes = 5;
  std::optional<double> target_reward;  // defaults to the environment's
  // Stop at the first evaluation meeting the target. Defaults to on, except
  // for ddpg_her_dex which runs its fixed episode schedule.
  std::optional<bool> early_stop;
  GateMode eval_gate_mode = GateMode::sampled;

  struct Dqn {
    double eps_max = 1.0;
    double eps_min = 0.01;
    int eps_decay_episodes = 200;  // cosine annealing horizon
    int target_update = 100;       // hard copy every C updates
    std::size_t buffer_size = 50000;
    std::size_t learning_starts = 1000;
    double grad_clip = 10.0;  // global-norm clip; 0 disables
    double priority_alpha = 0.6;
    PriorityMode priority_mode = PriorityMode::softmax;
    GateMode target_gate_mode = GateMode::deterministic;  // gates of the frozen target copy
  } dqn;

  struct Ppo {
    double clip = 0.2;
    double entropy_coef = 0.01;
    double gae_lambda = 0.95;
    int rollout_steps = 1024;  // N environment steps per iteration
    int epochs = 10;           // P
    double value_learning_rate = 1e-3;
    bool normalize_advantages = true;
    double grad_clip = 0.5;
  } ppo;

  struct Ddpg {
    std::vector<int> hidden{64, 64};
    double actor_learning_rate = 1e-3;
    double critic_learning_rate = 1e-3;
    double tau = 1e-3;
    double noise_scale = 0.1;
    double dex_alpha = 5.0;
    int knn_k = 5;
    int k_future = 4;
    HerStrategy her = HerStrategy::future;
    std::size_t agent_buffer = 10000;
    std::size_t demo_buffer = 5000;
    std::size_t expert_batch = 5000;  // demos searched per update
    int updates_per_episode = 50;
    double demo_perturbation = 0.3;  // action noise while collecting expert demos
  } ddpg;

  double resolved_target() const;
  bool resolved_early_stop() const { return early_stop.value_or(algo != Algo::ddpg_her_dex); }
  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct TrainRow {
  int episode = 0;
  double ret = 0.0;
  double epsilon = 0.0;
  double loss = 0.0;
  double l_sp = 0.0;
  double sparsity_pct = 0.0;
};

struct EvalRow {
  int episode = 0;
  double mean = 0.0;
  double std = 0.0;
  double sparsity_pct = 0.0;
  double success_rate = 0.0;
};

struct RunRecord {
  std::vector<TrainRow> train;
  std::vector<EvalRow> eval;
  std::optional<int> convergence_episode;  // episode of the first evaluation meeting the target
  int episodes_trained = 0;
  Network policy;  // the network a checkpoint stores
  double final_sparsity_pct = 0.0;
  std::optional<DemoBuffer> demos;  // DDPG+HER+DEX only

  const EvalRow* last_eval() const { return eval.empty() ? nullptr : &eval.back(); }
};

// Optional streaming hooks, called as rows are produced.
struct RunObserver {
  std::function<void(const TrainRow&)> on_train;
  std::function<void(const EvalRow&)> on_eval;
};

// eps_min + 0.5 (eps_max - eps_min)(1 + cos(pi step / total)).
double epsilon_at(int step, int total_steps, double eps_max, double eps_min);

// target := (1 - tau) target + tau online, over every trainable tensor.
void polyak_update(Network& target, const Network& online, double tau);

// Rescales `grads` so their global L2 norm is at most max_norm.
double clip_grad_norm(Gradients& grads, double max_norm);

enum class PolicyHead { argmax, tanh };

PolicyHead head_for(Algo algo);

// Input row fed to a policy: observation, followed by the goal for goal envs.
Vector policy_input(const Env& env, const Vector& observation);

// Greedy action for one input row.
Vector select_action(const Network& policy, PolicyHead head, const Vector& input, GateMode mode, Rng& rng);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;
  double success_rate = 0.0;
  std::vector<double> returns;
};

// Runs `episodes` greedy episodes; episode i resets with seed + i, gates are
// drawn from a stream seeded by `seed`.
EvalResult evaluate_policy(const Network& policy, PolicyHead head, const std::string& env, int episodes,
                           std::uint64_t seed, GateMode mode);

// Shared evaluate-and-record step used by every trainer. Returns true when
// the evaluation met the target.
bool record_evaluation(const AlgoConfig& cfg, PolicyHead head, const Network& policy, int episode, Rng& rng,
                       RunRecord& record, const RunObserver& observer);

}  // namespace splab
