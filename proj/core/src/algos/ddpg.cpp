#include "splab/algos/ddpg.hpp"

#include <cmath>

#include "splab/adam.hpp"
#include "splab/errors.hpp"

namespace splab {

GoalBatch GoalBatch::from(std::span<const GoalTransition> transitions) {
  GoalBatch b;
  const auto n = static_cast<Eigen::Index>(transitions.size());
  if (n == 0) return b;
  const auto& first = transitions.front();
  const auto obs = first.base.state.size();
  const auto goal = first.desired_goal.size();
  const auto act = first.base.action.size();
  b.inputs.resize(n, obs + goal);
  b.next_inputs.resize(n, obs + goal);
  b.actions.resize(n, act);
  b.rewards.resize(n);
  b.dones.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = transitions[static_cast<std::size_t>(i)];
    if (t.base.state.size() != obs || t.base.next_state.size() != obs || t.desired_goal.size() != goal ||
        t.base.action.size() != act) {
      throw ShapeError("goal transition widths differ within a batch");
    }
    b.inputs.row(i) << t.base.state.transpose(), t.desired_goal.transpose();
    b.next_inputs.row(i) << t.base.next_state.transpose(), t.desired_goal.transpose();
    b.actions.row(i) = t.base.action.transpose();
    b.rewards(i) = t.base.reward;
    b.dones(i) = t.base.done ? 1.0 : 0.0;
  }
  return b;
}

namespace {

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

DdpgLosses ddpg_losses(const GoalBatch& batch, const Network& actor, const Network& critic,
                       const Network& target_actor, const Network& target_critic, const Matrix& expert,
                       const Matrix& expert_next, const DdpgParams& params, GateMode mode, Rng& rng) {
  const auto b = batch.size();
  if (b < 1) throw InvalidArgument("empty batch");
  if (expert.size() == 0 || expert_next.size() == 0) throw InvalidArgument("expert actions are required");
  const auto act = batch.actions.cols();
  if (expert.rows() != b || expert_next.rows() != b || expert.cols() != act || expert_next.cols() != act) {
    throw ShapeError("expert actions do not match the batch");
  }
  const double n = static_cast<double>(b);
  DdpgLosses out;

  // Critic.
  const Matrix next_actions = predict(target_actor, batch.next_inputs, GateMode::deterministic).array().tanh().matrix();
  const Matrix next_q = predict(target_critic, concat_cols(batch.next_inputs, next_actions), GateMode::deterministic);
  out.targets.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double dist = (next_actions.row(i) - expert_next.row(i)).norm();
    out.targets(i) =
        batch.rewards(i) + (1.0 - batch.dones(i)) * (params.gamma * next_q(i, 0) - params.dex_alpha * dist);
  }
  const auto ccache = forward(critic, concat_cols(batch.inputs, batch.actions), mode, &rng);
  const Vector diff = ccache.output().col(0) - out.targets;
  out.critic = diff.squaredNorm() / n;
  out.critic_grads = backward(critic, ccache, (2.0 / n) * diff);

  // Actor.
  const auto acache = forward(actor, batch.inputs, mode, &rng);
  const Matrix a = acache.output().array().tanh().matrix();
  const auto qcache = forward(critic, concat_cols(batch.inputs, a), mode, &rng);
  const Gradients through_critic = backward(critic, qcache, Matrix::Constant(b, 1, -1.0 / n));
  Matrix da = through_critic.input.rightCols(act);
  double dex = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::RowVectorXd gap = a.row(i) - expert.row(i);
    const double d = gap.norm();
    dex += d;
    if (d > 0.0) da.row(i) += params.dex_alpha / n * gap / d;
  }
  out.actor = -qcache.output().col(0).mean() + params.dex_alpha * dex / n;
  const Matrix dpre = (da.array() * (1.0 - a.array().square())).matrix();
  out.actor_grads = backward(actor, acache, dpre);

  if (params.sparsity != Regularizer::none && params.lambda_c != 0.0) {
    const double scale = params.lambda_c / n;
    out.actor_penalty = scale * network_penalty(actor, params.sparsity);
    out.critic_penalty = scale * network_penalty(critic, params.sparsity);
    add_penalty_gradient(actor, params.sparsity, scale, out.actor_grads);
    add_penalty_gradient(critic, params.sparsity, scale, out.critic_grads);
  }
  out.actor += out.actor_penalty;
  out.critic += out.critic_penalty;
  return out;
}

void fill_demos(DemoBuffer& demos, const std::string& env_name, double perturbation, Rng& rng) {
  auto env = make_env(env_name);
  if (!env->goal_conditioned()) throw ConfigError("demonstrations need a goal-conditioned environment");
  const int act = env->spec().action.n;
  while (demos.size() < demos.capacity()) {
    Vector obs = env->reset(rng.next_u64());
    StepResult s;
    do {
      const Vector goal = env->desired_goal();
      const Vector expert = scripted_expert(env->achieved_goal(), goal);
      Vector query(obs.size() + goal.size());
      query << obs, goal;
      demos.push(std::move(query), expert);
      Vector noisy = expert;
      for (int j = 0; j < act; ++j) noisy(j) += perturbation * rng.normal();
      s = env->step(noisy);
      obs = s.observation;
    } while (!s.done && demos.size() < demos.capacity());
  }
}

Matrix expert_actions(const DemoBuffer& demos, std::span<const std::size_t> candidates, const Matrix& inputs, int k) {
  if (demos.size() == 0) throw InvalidArgument("no expert demonstrations");
  const auto act = demos.action(0).size();
  Matrix out(inputs.rows(), act);
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    out.row(i) = knn_expert_action(demos, candidates, inputs.row(i).transpose(), k).transpose();
  }
  return out;
}

RunRecord train_ddpg_her_dex(const AlgoConfig& cfg, const RunObserver& observer, const DemoBuffer* demos_in) {
  cfg.validate();
  if (cfg.algo != Algo::ddpg_her_dex) throw ConfigError("train_ddpg_her_dex needs algo ddpg_her_dex");
  auto env = make_env(cfg.env);
  const auto& spec = env->spec();
  const int in = spec.obs_dim + spec.goal_dim;
  const int act = spec.action.n;

  std::vector<int> actor_sizes{in};
  actor_sizes.insert(actor_sizes.end(), cfg.ddpg.hidden.begin(), cfg.ddpg.hidden.end());
  actor_sizes.push_back(act);
  std::vector<int> critic_sizes{in + act};
  critic_sizes.insert(critic_sizes.end(), cfg.ddpg.hidden.begin(), cfg.ddpg.hidden.end());
  critic_sizes.push_back(1);
  Network actor = mlp_new(actor_sizes, Activation::relu, cfg.seed);
  Network critic = mlp_new(critic_sizes, Activation::relu, cfg.seed + 1);
  if (cfg.sparsity == Regularizer::l0) {
    actor.enable_gates(cfg.log_alpha_init, cfg.gate);
    critic.enable_gates(cfg.log_alpha_init, cfg.gate);
  }

  RunRecord record;
  if (cfg.episodes == 0) {
    record.policy = std::move(actor);
    return record;
  }

  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 5);
  Rng eval_rng = rng.split();
  Rng demo_rng = rng.split();

  DemoBuffer demos(cfg.ddpg.demo_buffer);
  if (demos_in != nullptr && demos_in->size() > 0) {
    demos = *demos_in;
  } else {
    fill_demos(demos, cfg.env, cfg.ddpg.demo_perturbation, demo_rng);
  }
  if (demos.size() < static_cast<std::size_t>(cfg.ddpg.knn_k)) throw ConfigError("too few demonstrations for k");
  if (demos.query(0).size() != in) throw ConfigError("demonstrations do not match the environment");

  Network target_actor = actor;
  Network target_critic = critic;
  AdamConfig actor_cfg{cfg.ddpg.actor_learning_rate};
  AdamConfig critic_cfg{cfg.ddpg.critic_learning_rate};
  actor_cfg.gate_learning_rate = critic_cfg.gate_learning_rate = cfg.gate_learning_rate;
  AdamState actor_adam(actor_cfg);
  AdamState critic_adam(critic_cfg);
  ReplayBuffer<GoalTransition> buffer(cfg.ddpg.agent_buffer);
  const auto b = static_cast<std::size_t>(cfg.batch);
  const DdpgParams params{cfg.gamma, cfg.ddpg.dex_alpha, cfg.sparsity, cfg.lambda_c};
  const GoalReward goal_reward{PointReach::compute_reward, PointReach::is_success};

  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    // Linear decay from 1 at the first episode to 0 at the last.
    const double eps = cfg.episodes > 1 ? 1.0 - static_cast<double>(ep - 1) / (cfg.episodes - 1) : 0.0;
    Vector obs = env->reset(rng.next_u64());
    const Vector goal = env->desired_goal();
    std::vector<GoalTransition> episode;
    double ret = 0.0;
    StepResult s;
    do {
      Vector action = select_action(actor, PolicyHead::tanh, policy_input(*env, obs), GateMode::sampled, rng);
      for (int j = 0; j < act; ++j) action(j) += eps * cfg.ddpg.noise_scale * rng.normal();
      action = action.cwiseMax(spec.action.low).cwiseMin(spec.action.high);
      const Vector achieved = env->achieved_goal();
      s = env->step(action);
      ret += s.reward;
      GoalTransition t;
      t.base = Transition{obs, action, s.reward, s.observation, s.terminal};
      t.desired_goal = goal;
      t.achieved_goal = achieved;
      t.achieved_goal_next = *s.achieved_goal;
      episode.push_back(std::move(t));
      obs = s.observation;
    } while (!s.done);

    auto relabeled = her_relabel(episode, cfg.ddpg.her, cfg.ddpg.k_future, rng, goal_reward);
    for (auto& t : episode) buffer.push(std::move(t));
    for (auto& t : relabeled) buffer.push(std::move(t));

    double loss_sum = 0.0;
    int loss_count = 0;
    if (buffer.size() >= b) {
      for (int u = 0; u < cfg.ddpg.updates_per_episode; ++u) {
        const auto sample = sample_uniform(buffer, b, rng);
        const auto batch = GoalBatch::from(sample);
        const auto candidates = demos.sample_indices(cfg.ddpg.expert_batch, rng);
        const Matrix expert = expert_actions(demos, candidates, batch.inputs, cfg.ddpg.knn_k);
        const Matrix expert_next = expert_actions(demos, candidates, batch.next_inputs, cfg.ddpg.knn_k);
        DdpgLosses losses = ddpg_losses(batch, actor, critic, target_actor, target_critic, expert, expert_next, params,
                                        GateMode::sampled, rng);
        adam_step(critic_adam, critic, losses.critic_grads);
        adam_step(actor_adam, actor, losses.actor_grads);
        polyak_update(target_actor, actor, cfg.ddpg.tau);
        polyak_update(target_critic, critic, cfg.ddpg.tau);
        loss_sum += losses.actor + losses.critic;
        ++loss_count;
      }
    }

    TrainRow row;
    row.episode = ep;
    row.ret = ret;
    row.epsilon = eps;
    row.loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.l_sp = cfg.sparsity == Regularizer::none ? 0.0 : network_penalty(actor, cfg.sparsity);
    row.sparsity_pct = policy_sparsity(actor, rng).percent;
    record.train.push_back(row);
    if (observer.on_train) observer.on_train(row);
    record.episodes_trained = ep;

    if (ep % cfg.eval_every == 0) {
      const bool met = record_evaluation(cfg, PolicyHead::tanh, actor, ep, eval_rng, record, observer);
      if (met && cfg.resolved_early_stop()) break;
    }
  }
  Rng final_rng(cfg.seed + 17);
  record.final_sparsity_pct = policy_sparsity(actor, final_rng).percent;
  record.policy = std::move(actor);
  record.demos = std::move(demos);
  return record;
}

}  // namespace splab
