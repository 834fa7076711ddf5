#include "splab/algos/dqn.hpp"

#include "splab/adam.hpp"
#include "splab/errors.hpp"

namespace splab {

TransitionBatch TransitionBatch::from(std::span<const Transition> transitions) {
  TransitionBatch b;
  const auto n = static_cast<Eigen::Index>(transitions.size());
  if (n == 0) return b;
  const auto obs = transitions.front().state.size();
  b.states.resize(n, obs);
  b.next_states.resize(n, obs);
  b.rewards.resize(n);
  b.dones.resize(n);
  b.actions.reserve(transitions.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = transitions[static_cast<std::size_t>(i)];
    if (t.state.size() != obs || t.next_state.size() != obs) throw ShapeError("transition state width mismatch");
    b.states.row(i) = t.state.transpose();
    b.next_states.row(i) = t.next_state.transpose();
    b.rewards(i) = t.reward;
    b.dones(i) = t.done ? 1.0 : 0.0;
    b.actions.push_back(static_cast<int>(t.action(0)));
  }
  return b;
}

Vector dqn_target(const Matrix& next_q_target, const Matrix& next_q_online, const Vector& rewards,
                  const Vector& dones, double gamma, DqnVariant variant) {
  const auto n = next_q_target.rows();
  if (rewards.size() != n || dones.size() != n) throw ShapeError("target inputs differ in batch size");
  if (variant == DqnVariant::ddqn &&
      (next_q_online.rows() != n || next_q_online.cols() != next_q_target.cols())) {
    throw ShapeError("online and target Q values differ in shape");
  }
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double bootstrap = 0.0;
    if (variant == DqnVariant::dqn) {
      bootstrap = next_q_target.row(i).maxCoeff();
    } else {
      Eigen::Index a = 0;
      next_q_online.row(i).maxCoeff(&a);
      bootstrap = next_q_target(i, a);
    }
    y(i) = rewards(i) + gamma * bootstrap * (1.0 - dones(i));
  }
  return y;
}

Vector dqn_target(const TransitionBatch& batch, const Network& target, double gamma, DqnVariant variant,
                  const Network& online, GateMode mode, Rng& rng) {
  const Matrix qt = predict(target, batch.next_states, mode, &rng);
  Matrix qo;
  if (variant == DqnVariant::ddqn) qo = predict(online, batch.next_states, mode, &rng);
  return dqn_target(qt, qo, batch.rewards, batch.dones, gamma, variant);
}

DqnLoss dqn_loss(const Matrix& q, std::span<const int> actions, const Vector& targets, const Network& online,
                 Regularizer reg, double lambda_c) {
  const auto b = q.rows();
  if (b < 1) throw InvalidArgument("empty batch");
  if (static_cast<Eigen::Index>(actions.size()) != b || targets.size() != b) {
    throw ShapeError("loss inputs differ in batch size");
  }
  DqnLoss out;
  out.output_grad = Matrix::Zero(b, q.cols());
  out.td.resize(b);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= q.cols()) throw InvalidArgument("action index out of range");
    const double diff = q(i, a) - targets(i);
    out.td(i) = -diff;
    sq += diff * diff;
    out.output_grad(i, a) = 2.0 * diff / static_cast<double>(b);
  }
  out.task = sq / static_cast<double>(b);
  if (reg != Regularizer::none && lambda_c != 0.0) {
    out.penalty = lambda_c * network_penalty(online, reg) / static_cast<double>(b);
  }
  out.total = out.task + out.penalty;
  return out;
}

RunRecord train_dqn(const AlgoConfig& cfg, const RunObserver& observer) {
  cfg.validate();
  if (cfg.algo != Algo::dqn && cfg.algo != Algo::ddqn) throw ConfigError("train_dqn needs algo dqn or ddqn");
  const auto variant = cfg.algo == Algo::ddqn ? DqnVariant::ddqn : DqnVariant::dqn;
  auto env = make_env(cfg.env);
  const auto& spec = env->spec();

  std::vector<int> sizes{spec.obs_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(spec.action.n);
  Network online = mlp_new(sizes, Activation::relu, cfg.seed);
  if (cfg.sparsity == Regularizer::l0) online.enable_gates(cfg.log_alpha_init, cfg.gate);
  Network target = online;

  RunRecord record;
  if (cfg.episodes == 0) {
    record.policy = std::move(online);
    return record;
  }

  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  Rng eval_rng = rng.split();
  AdamConfig adam_cfg{cfg.learning_rate};
  adam_cfg.gate_learning_rate = cfg.gate_learning_rate;
  AdamState adam(adam_cfg);
  ReplayBuffer<Transition> buffer(cfg.dqn.buffer_size, variant == DqnVariant::ddqn);
  const auto b = static_cast<std::size_t>(cfg.batch);
  const std::size_t ready = std::max(b + 1, cfg.dqn.learning_starts);
  const double scale = cfg.lambda_c / static_cast<double>(cfg.batch);
  std::uint64_t updates = 0;

  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    const double eps = epsilon_at(ep - 1, cfg.dqn.eps_decay_episodes, cfg.dqn.eps_max, cfg.dqn.eps_min);
    Vector obs = env->reset(rng.next_u64());
    double ret = 0.0;
    double loss_sum = 0.0;
    int loss_count = 0;
    StepResult s;
    do {
      Vector action;
      if (rng.uniform() < eps) {
        action = Vector::Constant(1, static_cast<double>(rng.index(static_cast<std::size_t>(spec.action.n))));
      } else {
        action = select_action(online, PolicyHead::argmax, obs, GateMode::sampled, rng);
      }
      s = env->step(action);
      ret += s.reward;
      buffer.push(Transition{obs, action, s.reward, s.observation, s.terminal});
      obs = s.observation;

      if (buffer.size() < ready) continue;

      std::vector<Transition> sample;
      std::vector<std::size_t> slots;
      if (buffer.prioritized()) {
        auto pb = sample_prioritized(buffer, b, rng, cfg.dqn.priority_mode);
        sample = std::move(pb.items);
        slots = std::move(pb.slots);
      } else {
        sample = sample_uniform(buffer, b, rng);
      }
      const auto batch = TransitionBatch::from(sample);
      const Vector y = dqn_target(batch, target, cfg.gamma, variant, online, cfg.dqn.target_gate_mode, rng);
      const auto cache = forward(online, batch.states, GateMode::sampled, &rng);
      const DqnLoss loss = dqn_loss(cache.output(), batch.actions, y, online, cfg.sparsity, cfg.lambda_c);
      Gradients grads = backward(online, cache, loss.output_grad);
      add_penalty_gradient(online, cfg.sparsity, scale, grads);
      clip_grad_norm(grads, cfg.dqn.grad_clip);
      adam_step(adam, online, grads);
      loss_sum += loss.total;
      ++loss_count;

      for (std::size_t i = 0; i < slots.size(); ++i) {
        buffer.set_priority(slots[i], priority_of(loss.td(static_cast<Eigen::Index>(i)), cfg.dqn.priority_alpha));
      }
      if (++updates % static_cast<std::uint64_t>(cfg.dqn.target_update) == 0) target = online;
    } while (!s.done);

    TrainRow row;
    row.episode = ep;
    row.ret = ret;
    row.epsilon = eps;
    row.loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.l_sp = cfg.sparsity == Regularizer::none ? 0.0 : network_penalty(online, cfg.sparsity);
    row.sparsity_pct = policy_sparsity(online, rng).percent;
    record.train.push_back(row);
    if (observer.on_train) observer.on_train(row);
    record.episodes_trained = ep;

    if (ep % cfg.eval_every == 0) {
      const bool met = record_evaluation(cfg, PolicyHead::argmax, online, ep, eval_rng, record, observer);
      if (met && cfg.resolved_early_stop()) break;
    }
  }
  Rng final_rng(cfg.seed + 17);
  record.final_sparsity_pct = policy_sparsity(online, final_rng).percent;
  record.policy = std::move(online);
  return record;
}

}  // namespace splab
