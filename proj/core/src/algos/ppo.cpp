#include "splab/algos/ppo.hpp"

#include <cmath>
#include <numeric>

#include "splab/adam.hpp"
#include "splab/errors.hpp"

namespace splab {

Vector gae(const Vector& rewards, const Vector& values, const Vector& next_values, const Vector& dones, double gamma,
           double lam, const Vector& episode_ends) {
  const auto n = rewards.size();
  if (values.size() != n || next_values.size() != n || dones.size() != n) {
    throw ShapeError("gae inputs differ in length");
  }
  if (episode_ends.size() != 0 && episode_ends.size() != n) throw ShapeError("episode_ends has the wrong length");
  Vector adv(n);
  double acc = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double live = 1.0 - dones(t);
    const double cont = episode_ends.size() != 0 && episode_ends(t) != 0.0 ? 0.0 : live;
    const double delta = rewards(t) + gamma * next_values(t) * live - values(t);
    acc = delta + gamma * lam * cont * acc;
    adv(t) = acc;
  }
  return adv;
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

PpoLoss ppo_loss(const Matrix& logits, std::span<const int> actions, const Vector& old_logprobs,
                 const Vector& advantages, double clip, double entropy_coef, const Network& policy, Regularizer reg,
                 double lambda_c) {
  const auto b = logits.rows();
  if (b < 1) throw InvalidArgument("empty batch");
  if (static_cast<Eigen::Index>(actions.size()) != b || old_logprobs.size() != b || advantages.size() != b) {
    throw ShapeError("loss inputs differ in batch size");
  }
  const double n = static_cast<double>(b);
  const Matrix logp = log_softmax(logits);
  const Matrix p = logp.array().exp().matrix();

  PpoLoss out;
  out.logits_grad = Matrix::Zero(b, logits.cols());
  double surr = 0.0;
  double ent = 0.0;
  int clipped = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= logits.cols()) throw InvalidArgument("action index out of range");
    const double ratio = std::exp(logp(i, a) - old_logprobs(i));
    const double adv = advantages(i);
    const double unclipped = ratio * adv;
    const double bounded = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
    surr += std::min(unclipped, bounded);
    const bool active = unclipped <= bounded;
    if (!active) ++clipped;
    if (active) {
      // d(-ratio*adv/n)/dlogits = -(ratio*adv/n) * (onehot - p)
      const double c = -unclipped / n;
      out.logits_grad.row(i) -= c * p.row(i);
      out.logits_grad(i, a) += c;
    }
    const double h = -(p.row(i).array() * logp.row(i).array()).sum();
    ent += h;
    // d(-coef*H/n)/dlogit_j = coef/n * p_j (log p_j + H)
    out.logits_grad.row(i).array() += entropy_coef / n * p.row(i).array() * (logp.row(i).array() + h);
  }
  out.surrogate = -surr / n;
  out.entropy = ent / n;
  out.clip_fraction = clipped / n;
  if (reg != Regularizer::none && lambda_c != 0.0) out.penalty = lambda_c * network_penalty(policy, reg) / n;
  out.total = out.surrogate - entropy_coef * out.entropy + out.penalty;
  return out;
}

namespace {

struct Rollout {
  Matrix states;
  std::vector<int> actions;
  Vector logprobs;
  Vector rewards;
  Vector dones;
  Vector ends;
  Vector values;
  Vector next_values;
  std::vector<double> finished_returns;
};

int sample_categorical(const Eigen::RowVectorXd& logp, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < logp.size(); ++j) {
    acc += std::exp(logp(j));
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(logp.size() - 1);
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Vector gather(const Vector& v, std::span<const std::size_t> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

RunRecord train_ppo(const AlgoConfig& cfg, const RunObserver& observer) {
  cfg.validate();
  if (cfg.algo != Algo::ppo) throw ConfigError("train_ppo needs algo ppo");
  auto env = make_env(cfg.env);
  const auto& spec = env->spec();

  std::vector<int> sizes{spec.obs_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  std::vector<int> value_sizes = sizes;
  sizes.push_back(spec.action.n);
  value_sizes.push_back(1);
  Network policy = mlp_new(sizes, Activation::tanh, cfg.seed);
  // Near-uniform initial action distribution.
  policy.mutable_layers().back().weight *= 0.01;
  if (cfg.sparsity == Regularizer::l0) policy.enable_gates(cfg.log_alpha_init, cfg.gate);
  Network value = mlp_new(value_sizes, Activation::tanh, cfg.seed + 1);

  RunRecord record;
  if (cfg.episodes == 0) {
    record.policy = std::move(policy);
    return record;
  }

  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 3);
  Rng eval_rng = rng.split();
  AdamConfig policy_cfg{cfg.learning_rate};
  policy_cfg.gate_learning_rate = cfg.gate_learning_rate;
  AdamState policy_adam(policy_cfg);
  AdamState value_adam(AdamConfig{cfg.ppo.value_learning_rate});
  const auto n_steps = static_cast<Eigen::Index>(cfg.ppo.rollout_steps);
  const auto mb = static_cast<std::size_t>(std::min<Eigen::Index>(cfg.batch, n_steps));
  const double scale = cfg.lambda_c / static_cast<double>(mb);

  Vector obs = env->reset(rng.next_u64());
  double running_return = 0.0;

  for (int it = 1; it <= cfg.episodes; ++it) {
    Rollout ro;
    ro.states.resize(n_steps, spec.obs_dim);
    ro.actions.resize(static_cast<std::size_t>(n_steps));
    ro.logprobs.resize(n_steps);
    ro.rewards.resize(n_steps);
    ro.dones.resize(n_steps);
    ro.ends.resize(n_steps);
    std::vector<Vector> next_states;
    next_states.reserve(static_cast<std::size_t>(n_steps));

    for (Eigen::Index t = 0; t < n_steps; ++t) {
      ro.states.row(t) = obs.transpose();
      const Matrix logits = predict(policy, ro.states.row(t), GateMode::sampled, &rng);
      const Matrix logp = log_softmax(logits);
      const int a = sample_categorical(logp.row(0), rng);
      const StepResult s = env->step(a);
      ro.actions[static_cast<std::size_t>(t)] = a;
      ro.logprobs(t) = logp(0, a);
      ro.rewards(t) = s.reward;
      ro.dones(t) = s.terminal ? 1.0 : 0.0;
      ro.ends(t) = s.done ? 1.0 : 0.0;
      next_states.push_back(s.observation);
      running_return += s.reward;
      if (s.done) {
        ro.finished_returns.push_back(running_return);
        running_return = 0.0;
        obs = env->reset(rng.next_u64());
      } else {
        obs = s.observation;
      }
    }
    Matrix next(n_steps, spec.obs_dim);
    for (Eigen::Index t = 0; t < n_steps; ++t) next.row(t) = next_states[static_cast<std::size_t>(t)].transpose();
    ro.values = predict(value, ro.states).col(0);
    ro.next_values = predict(value, next).col(0);

    const Vector adv_raw = gae(ro.rewards, ro.values, ro.next_values, ro.dones, cfg.gamma, cfg.ppo.gae_lambda, ro.ends);
    const Vector returns = adv_raw + ro.values;
    Vector adv = adv_raw;
    if (cfg.ppo.normalize_advantages && n_steps > 1) {
      const double mean = adv.mean();
      const double sd = std::sqrt((adv.array() - mean).square().mean());
      adv = ((adv.array() - mean) / (sd + 1e-8)).matrix();
    }

    std::vector<std::size_t> order(static_cast<std::size_t>(n_steps));
    std::iota(order.begin(), order.end(), std::size_t{0});
    double loss_sum = 0.0;
    int loss_count = 0;
    for (int epoch = 0; epoch < cfg.ppo.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      for (std::size_t start = 0; start + mb <= order.size(); start += mb) {
        const std::span<const std::size_t> idx(order.data() + start, mb);
        const Matrix states = gather_rows(ro.states, idx);
        std::vector<int> acts;
        acts.reserve(mb);
        for (auto i : idx) acts.push_back(ro.actions[i]);

        const auto cache = forward(policy, states, GateMode::sampled, &rng);
        const PpoLoss loss = ppo_loss(cache.output(), acts, gather(ro.logprobs, idx), gather(adv, idx), cfg.ppo.clip,
                                      cfg.ppo.entropy_coef, policy, cfg.sparsity, cfg.lambda_c);
        Gradients pg = backward(policy, cache, loss.logits_grad);
        add_penalty_gradient(policy, cfg.sparsity, scale, pg);
        clip_grad_norm(pg, cfg.ppo.grad_clip);
        adam_step(policy_adam, policy, pg);

        const auto vcache = forward(value, states);
        const Vector target = gather(returns, idx);
        const Matrix vgrad = (2.0 / static_cast<double>(mb)) * (vcache.output().col(0) - target);
        Gradients vg = backward(value, vcache, vgrad);
        clip_grad_norm(vg, cfg.ppo.grad_clip);
        adam_step(value_adam, value, vg);

        loss_sum += loss.total;
        ++loss_count;
      }
    }

    TrainRow row;
    row.episode = it;
    row.ret = ro.finished_returns.empty()
                  ? running_return
                  : std::accumulate(ro.finished_returns.begin(), ro.finished_returns.end(), 0.0) /
                        static_cast<double>(ro.finished_returns.size());
    row.loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.l_sp = cfg.sparsity == Regularizer::none ? 0.0 : network_penalty(policy, cfg.sparsity);
    row.sparsity_pct = policy_sparsity(policy, rng).percent;
    record.train.push_back(row);
    if (observer.on_train) observer.on_train(row);
    record.episodes_trained = it;

    if (it % cfg.eval_every == 0) {
      const bool met = record_evaluation(cfg, PolicyHead::argmax, policy, it, eval_rng, record, observer);
      if (met && cfg.resolved_early_stop()) break;
    }
  }
  Rng final_rng(cfg.seed + 17);
  record.final_sparsity_pct = policy_sparsity(policy, final_rng).percent;
  record.policy = std::move(policy);
  return record;
}

}  // namespace splab
