#include "splab/algos/common.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "splab/errors.hpp"

namespace splab {

std::string to_string(Algo a) {
  switch (a) {
    case Algo::dqn:
      return "dqn";
    case Algo::ddqn:
      return "ddqn";
    case Algo::ppo:
      return "ppo";
    case Algo::ddpg_her_dex:
      return "ddpg_her_dex";
  }
  return "dqn";
}

Algo algo_from_string(const std::string& name) {
  if (name == "dqn") return Algo::dqn;
  if (name == "ddqn") return Algo::ddqn;
  if (name == "ppo") return Algo::ppo;
  if (name == "ddpg_her_dex" || name == "ddpg") return Algo::ddpg_her_dex;
  throw ConfigError("unknown algorithm '" + name + "'");
}

double AlgoConfig::resolved_target() const { return target_reward ? *target_reward : env_spec(env).target_reward; }

void AlgoConfig::validate() const {
  const auto spec = env_spec(env);
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (lambda_c < 0.0) throw ConfigError("coefficient must be non-negative");
  if (eval_every < 1 || eval_episodes < 1) throw ConfigError("evaluation cadence and count must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  try {
    gate.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (ppo.clip <= 0.0) throw ConfigError("PPO clip must be positive");
  if (ddpg.tau < 0.0 || ddpg.tau > 1.0) throw ConfigError("tau must lie in [0, 1]");

  const bool discrete = spec.action.is_discrete();
  switch (algo) {
    case Algo::dqn:
    case Algo::ddqn:
    case Algo::ppo:
      if (!discrete) throw ConfigError(to_string(algo) + " needs a discrete-action environment");
      break;
    case Algo::ddpg_her_dex:
      if (discrete || spec.goal_dim == 0) throw ConfigError("ddpg_her_dex needs a goal-conditioned continuous environment");
      break;
  }
}

double epsilon_at(int step, int total_steps, double eps_max, double eps_min) {
  if (total_steps <= 0) return eps_min;
  const double frac = std::clamp(static_cast<double>(step) / total_steps, 0.0, 1.0);
  return eps_min + 0.5 * (eps_max - eps_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

void polyak_update(Network& target, const Network& online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw InvalidArgument("tau must lie in [0, 1]");
  const auto src = online.parameters();
  auto dst = target.parameters();
  if (src.size() != dst.size()) throw ShapeError("target and online networks differ in structure");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].size() != dst[i].size()) throw ShapeError("target and online tensors differ in size");
    Eigen::Map<Eigen::ArrayXd> t(dst[i].data(), static_cast<Eigen::Index>(dst[i].size()));
    Eigen::Map<const Eigen::ArrayXd> o(src[i].data(), static_cast<Eigen::Index>(src[i].size()));
    if (tau == 1.0) {
      t = o;
    } else if (tau != 0.0) {
      t = (1.0 - tau) * t + tau * o;
    }
  }
}

double clip_grad_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (auto v : std::as_const(grads).views())
    for (double g : v) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& l : grads.layers) {
      l.weight *= f;
      l.bias *= f;
      if (l.log_alpha.size() > 0) l.log_alpha *= f;
    }
  }
  return norm;
}

PolicyHead head_for(Algo algo) { return algo == Algo::ddpg_her_dex ? PolicyHead::tanh : PolicyHead::argmax; }

Vector policy_input(const Env& env, const Vector& observation) {
  if (!env.goal_conditioned()) return observation;
  const Vector goal = env.desired_goal();
  Vector x(observation.size() + goal.size());
  x << observation, goal;
  return x;
}

Vector select_action(const Network& policy, PolicyHead head, const Vector& input, GateMode mode, Rng& rng) {
  const Matrix row = input.transpose();
  const Matrix out = predict(policy, row, mode, &rng);
  if (head == PolicyHead::argmax) {
    Eigen::Index best = 0;
    out.row(0).maxCoeff(&best);
    return Vector::Constant(1, static_cast<double>(best));
  }
  return out.row(0).transpose().array().tanh().matrix();
}

EvalResult evaluate_policy(const Network& policy, PolicyHead head, const std::string& env_name, int episodes,
                           std::uint64_t seed, GateMode mode) {
  if (episodes < 1) throw InvalidArgument("evaluation needs at least one episode");
  auto env = make_env(env_name);
  if (policy.input_dim() != env->spec().obs_dim + env->spec().goal_dim) {
    throw ShapeError("policy input width does not match environment '" + env_name + "'");
  }
  Rng gate_rng(seed ^ 0xA5A5A5A5ULL);
  EvalResult r;
  int successes = 0;
  for (int i = 0; i < episodes; ++i) {
    Vector obs = env->reset(seed + static_cast<std::uint64_t>(i));
    double ret = 0.0;
    StepResult s;
    do {
      const Vector a = select_action(policy, head, policy_input(*env, obs), mode, gate_rng);
      s = env->step(a);
      ret += s.reward;
      obs = s.observation;
    } while (!s.done);
    if (env->goal_conditioned() && s.terminal) ++successes;
    r.returns.push_back(ret);
  }
  const double n = static_cast<double>(episodes);
  r.mean = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / n;
  double var = 0.0;
  for (double x : r.returns) var += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(var / n);
  r.success_rate = successes / n;
  return r;
}

bool record_evaluation(const AlgoConfig& cfg, PolicyHead head, const Network& policy, int episode, Rng& rng,
                       RunRecord& record, const RunObserver& observer) {
  const std::uint64_t seed = rng.next_u64() % 1000000007ULL;
  const EvalResult res = evaluate_policy(policy, head, cfg.env, cfg.eval_episodes, seed, cfg.eval_gate_mode);
  Rng sparsity_rng(seed);
  EvalRow row;
  row.episode = episode;
  row.mean = res.mean;
  row.std = res.std;
  row.success_rate = res.success_rate;
  row.sparsity_pct = policy_sparsity(policy, sparsity_rng).percent;
  record.eval.push_back(row);
  if (observer.on_eval) observer.on_eval(row);
  const bool met = res.mean >= cfg.resolved_target();
  if (met && !record.convergence_episode) record.convergence_episode = episode;
  return met;
}

}  // namespace splab
