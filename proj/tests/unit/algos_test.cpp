#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "properties.hpp"
#include "splab/algos/ddpg.hpp"
#include "splab/algos/dqn.hpp"
#include "splab/algos/ppo.hpp"
#include "splab/errors.hpp"

using namespace splab;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Epsilon, CosineSchedule) {
  EXPECT_DOUBLE_EQ(epsilon_at(0, 200, 1.0, 0.01), 1.0);
  EXPECT_DOUBLE_EQ(epsilon_at(200, 200, 1.0, 0.01), 0.01);
  EXPECT_NEAR(epsilon_at(100, 200, 1.0, 0.0), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(epsilon_at(500, 200, 1.0, 0.01), 0.01);
}

TEST(DqnTarget, TerminalIsReward) {
  const Vector t = dqn_target(row({3.0, 9.0}), row({0.0, 0.0}), vec({1.5}), vec({1.0}), 0.99, DqnVariant::dqn);
  EXPECT_EQ(t(0), 1.5);
}

TEST(DqnTarget, MaxThenDiscount) {
  const Vector t = dqn_target(row({1.0, 5.0}), Matrix(), vec({0.0}), vec({0.0}), 0.9, DqnVariant::dqn);
  EXPECT_DOUBLE_EQ(t(0), 4.5);
}

TEST(DqnTarget, DoubleUsesOnlineArgmax) {
  const Matrix online = row({9.0, 1.0});
  const Matrix target = row({2.0, 8.0});
  EXPECT_EQ(dqn_target(target, online, vec({0.0}), vec({0.0}), 1.0, DqnVariant::ddqn)(0), 2.0);
  EXPECT_EQ(dqn_target(target, online, vec({0.0}), vec({0.0}), 1.0, DqnVariant::dqn)(0), 8.0);
}

TEST(DqnTarget, DoubleNeverExceedsMaxOnRandomNets) {
  Rng rng(1);
  const Network online = mlp_new(std::vector<int>{4, 16, 3}, Activation::relu, 1);
  const Network target = mlp_new(std::vector<int>{4, 16, 3}, Activation::relu, 2);
  TransitionBatch batch;
  const int b = 64;
  batch.states = random_matrix(rng, b, 4);
  batch.next_states = random_matrix(rng, b, 4);
  batch.actions.assign(b, 0);
  batch.rewards = Vector::Zero(b);
  batch.dones = Vector::Zero(b);
  const Vector dd = dqn_target(batch, target, 0.99, DqnVariant::ddqn, online, GateMode::deterministic, rng);
  const Vector d = dqn_target(batch, target, 0.99, DqnVariant::dqn, online, GateMode::deterministic, rng);
  const Matrix qo = predict(online, batch.next_states);
  const Matrix qt = predict(target, batch.next_states);
  int disagreements = 0;
  for (int i = 0; i < b; ++i) {
    Eigen::Index ao, at;
    qo.row(i).maxCoeff(&ao);
    qt.row(i).maxCoeff(&at);
    if (ao == at) {
      EXPECT_EQ(dd(i), d(i));
    } else {
      EXPECT_LT(dd(i), d(i));
      ++disagreements;
    }
  }
  EXPECT_GT(disagreements, 0);
}

TEST(DqnTarget, GreedyStepInvariantToPositiveAffineMaps) {
  Rng rng(2);
  const Matrix qt = random_matrix(rng, 32, 4);
  const Matrix qo = random_matrix(rng, 32, 4);
  const Vector r = random_matrix(rng, 32, 1).col(0);
  const Vector d = Vector::Zero(32);
  const Vector base = dqn_target(qt, qo, r, d, 0.9, DqnVariant::ddqn);
  const Matrix moved = (3.7 * qo.array() - 12.0).matrix();
  EXPECT_EQ(dqn_target(qt, moved, r, d, 0.9, DqnVariant::ddqn), base);
}

TEST(DqnLoss, ZeroWhenPredictionsMatch) {
  const Network net = mlp_new(std::vector<int>{2, 2}, Activation::relu, 0);
  const std::vector<int> a{1};
  const DqnLoss l = dqn_loss(row({0.3, 0.7}), a, vec({0.7}), net, Regularizer::none, 0.0);
  EXPECT_EQ(l.task, 0.0);
  EXPECT_EQ(l.output_grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(DqnLoss, MeanSquaredError) {
  const Network net = mlp_new(std::vector<int>{2, 2}, Activation::relu, 0);
  Matrix q(2, 2);
  q << 1.0, 0.0, 0.0, 2.0;
  const std::vector<int> a{0, 1};
  const DqnLoss l = dqn_loss(q, a, vec({3.0, 2.0}), net, Regularizer::none, 0.0);
  EXPECT_DOUBLE_EQ(l.task, 2.0);
  EXPECT_DOUBLE_EQ(l.output_grad(0, 0), -2.0);
  EXPECT_EQ(l.output_grad(0, 1), 0.0);
}

TEST(DqnLoss, SparsityTermIsScaledPenalty) {
  Network net = mlp_new(std::vector<int>{4, 8, 2}, Activation::relu, 3);
  net.enable_gates(1.3);
  Rng rng(4);
  const Matrix q = random_matrix(rng, 5, 2);
  const std::vector<int> a{0, 1, 1, 0, 1};
  const Vector t = random_matrix(rng, 5, 1).col(0);
  const DqnLoss dense = dqn_loss(q, a, t, net, Regularizer::none, 0.0);
  const DqnLoss zero = dqn_loss(q, a, t, net, Regularizer::l0, 0.0);
  EXPECT_EQ(zero.total, dense.total);
  EXPECT_EQ(zero.output_grad, dense.output_grad);
  const DqnLoss sparse = dqn_loss(q, a, t, net, Regularizer::l0, 0.05);
  EXPECT_EQ(sparse.penalty, 0.05 * network_penalty(net, Regularizer::l0) / 5.0);
  EXPECT_EQ(sparse.total, sparse.task + sparse.penalty);
  EXPECT_EQ(sparse.task, dense.task);
}

TEST(Gae, LambdaZeroIsTdError) {
  const Vector r = vec({1.0, 0.5, -1.0});
  const Vector v = vec({0.2, 0.4, 0.1});
  const Vector nv = vec({0.4, 0.1, 0.0});
  const Vector d = vec({0.0, 0.0, 1.0});
  const Vector a = gae(r, v, nv, d, 0.9, 0.0);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(a(i), r(i) + 0.9 * nv(i) * (1.0 - d(i)) - v(i));
}

TEST(Gae, SingleTerminalStep) {
  EXPECT_DOUBLE_EQ(gae(vec({1.0}), vec({0.5}), vec({7.0}), vec({1.0}), 0.99, 0.95)(0), 0.5);
}

TEST(Gae, EpisodeEndCutsAccumulationButKeepsBootstrap) {
  const Vector r = vec({1.0, 1.0});
  const Vector v = vec({0.0, 0.0});
  const Vector nv = vec({2.0, 3.0});
  const Vector a = gae(r, v, nv, Vector::Zero(2), 0.5, 1.0, vec({1.0, 0.0}));
  EXPECT_DOUBLE_EQ(a(0), 1.0 + 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(a(1), 1.0 + 0.5 * 3.0);
}

TEST(Gae, BruteForceUpToLengthEight) {
  const auto r = props::gae_bruteforce(8, 17);
  EXPECT_TRUE(r.pass) << r.detail;
}

namespace {

// One-sample PPO loss whose ratio is exactly `ratio`.
PpoLoss single(double ratio, double adv, double clip = 0.2, double entropy_coef = 0.0) {
  const Matrix logits = row({0.3, -0.2});
  const Matrix lp = log_softmax(logits);
  const std::vector<int> a{0};
  const Network net = mlp_new(std::vector<int>{2, 2}, Activation::relu, 0);
  return ppo_loss(logits, a, vec({lp(0, 0) - std::log(ratio)}), vec({adv}), clip, entropy_coef, net,
                  Regularizer::none, 0.0);
}

}  // namespace

TEST(PpoLoss, ClipBindsForLargeRatio) {
  const PpoLoss l = single(2.0, 1.0);
  EXPECT_NEAR(l.surrogate, -1.2, 1e-12);
  EXPECT_EQ(l.logits_grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(l.clip_fraction, 1.0);
}

TEST(PpoLoss, PessimisticBoundForNegativeAdvantage) {
  const PpoLoss l = single(0.5, -1.0);
  EXPECT_NEAR(l.surrogate, 0.8, 1e-12);
  EXPECT_EQ(l.logits_grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PpoLoss, UnitRatioIsPlainPolicyGradient) {
  Rng rng(6);
  const Matrix logits = random_matrix(rng, 6, 3);
  const Matrix lp = log_softmax(logits);
  std::vector<int> a(6);
  Vector old(6), adv(6);
  for (int i = 0; i < 6; ++i) {
    a[i] = static_cast<int>(rng.index(3));
    old(i) = lp(i, a[i]);
    adv(i) = rng.uniform(-1.0, 1.0);
  }
  const Network net = mlp_new(std::vector<int>{2, 3}, Activation::relu, 0);
  const PpoLoss l = ppo_loss(logits, a, old, adv, 0.2, 0.01, net, Regularizer::none, 0.0);
  EXPECT_NEAR(l.surrogate, -adv.mean(), 1e-12);
  double h = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) h -= std::exp(lp(i, j)) * lp(i, j) / 6.0;
  EXPECT_NEAR(l.entropy, h, 1e-12);
  EXPECT_NEAR(l.total, -adv.mean() - 0.01 * h, 1e-12);
}

TEST(PpoLoss, LogitGradientMatchesFiniteDifference) {
  Rng rng(7);
  Matrix logits = random_matrix(rng, 8, 3, -2.0, 2.0);
  const Matrix lp = log_softmax(logits);
  std::vector<int> a(8);
  Vector old(8), adv(8);
  for (int i = 0; i < 8; ++i) {
    a[i] = static_cast<int>(rng.index(3));
    old(i) = lp(i, a[i]) + rng.uniform(-0.5, 0.5);
    adv(i) = rng.uniform(-1.0, 1.0);
  }
  const Network net = mlp_new(std::vector<int>{2, 3}, Activation::relu, 0);
  auto objective = [&](const Matrix& z) {
    const PpoLoss l = ppo_loss(z, a, old, adv, 0.2, 0.05, net, Regularizer::none, 0.0);
    return l.surrogate - 0.05 * l.entropy;
  };
  const PpoLoss l = ppo_loss(logits, a, old, adv, 0.2, 0.05, net, Regularizer::none, 0.0);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Matrix up = logits, down = logits;
    up.data()[i] += h;
    down.data()[i] -= h;
    EXPECT_NEAR(l.logits_grad.data()[i], (objective(up) - objective(down)) / (2 * h), 1e-7);
  }
}

TEST(Polyak, Examples) {
  Layer l;
  l.weight = Matrix::Zero(1, 1);
  l.bias = Vector::Zero(1);
  Network target({l});
  Layer o = l;
  o.weight(0, 0) = 10.0;
  o.bias(0) = 10.0;
  const Network online({o});
  polyak_update(target, online, 0.001);
  EXPECT_NEAR(target.layer(0).weight(0, 0), 0.01, 1e-15);
  EXPECT_THROW(polyak_update(target, online, 1.5), InvalidArgument);
}

TEST(Polyak, Identities) {
  const auto r = props::polyak_identities(9);
  EXPECT_TRUE(r.pass) << r.detail;
}

namespace {

struct DdpgFixture {
  Network actor = mlp_new(std::vector<int>{6, 8, 3}, Activation::relu, 1);
  Network critic = mlp_new(std::vector<int>{9, 8, 1}, Activation::relu, 2);
  Network target_actor = mlp_new(std::vector<int>{6, 8, 3}, Activation::relu, 3);
  Network target_critic = mlp_new(std::vector<int>{9, 8, 1}, Activation::relu, 4);
  GoalBatch batch;
  Rng rng{5};

  DdpgFixture() {
    const int b = 4;
    batch.inputs = random_matrix(rng, b, 6);
    batch.actions = random_matrix(rng, b, 3);
    batch.rewards = -Vector::Ones(b);
    batch.next_inputs = random_matrix(rng, b, 6);
    batch.dones = Vector::Zero(b);
    batch.dones(3) = 1.0;
  }

  Matrix next_target_actions() const { return predict(target_actor, batch.next_inputs).array().tanh().matrix(); }
  Matrix actor_actions() const { return predict(actor, batch.inputs).array().tanh().matrix(); }
};

Matrix concat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

TEST(DdpgLosses, AlphaZeroIsPlainDdpg) {
  DdpgFixture f;
  const Matrix expert = random_matrix(f.rng, 4, 3);
  const Matrix expert_next = random_matrix(f.rng, 4, 3);
  DdpgParams p;
  p.dex_alpha = 0.0;
  const DdpgLosses l = ddpg_losses(f.batch, f.actor, f.critic, f.target_actor, f.target_critic, expert, expert_next,
                                   p, GateMode::deterministic, f.rng);
  const Matrix qn = predict(f.target_critic, concat(f.batch.next_inputs, f.next_target_actions()));
  for (int i = 0; i < 4; ++i) {
    const double want = f.batch.rewards(i) + (1.0 - f.batch.dones(i)) * 0.99 * qn(i, 0);
    EXPECT_NEAR(l.targets(i), want, 1e-12);
  }
  const Matrix q = predict(f.critic, concat(f.batch.inputs, f.actor_actions()));
  EXPECT_NEAR(l.actor, -q.mean(), 1e-12);
}

TEST(DdpgLosses, ExpertAgreementRemovesDistanceTerm) {
  DdpgFixture f;
  DdpgParams p;
  p.dex_alpha = 5.0;
  const DdpgLosses l = ddpg_losses(f.batch, f.actor, f.critic, f.target_actor, f.target_critic, f.actor_actions(),
                                   f.next_target_actions(), p, GateMode::deterministic, f.rng);
  const Matrix q = predict(f.critic, concat(f.batch.inputs, f.actor_actions()));
  EXPECT_NEAR(l.actor, -q.mean(), 1e-12);
  const Matrix qn = predict(f.target_critic, concat(f.batch.next_inputs, f.next_target_actions()));
  EXPECT_NEAR(l.targets(0), -1.0 + 0.99 * qn(0, 0), 1e-12);
}

TEST(DdpgLosses, TerminalMasksBootstrapAndDistance) {
  DdpgFixture f;
  const Matrix expert = random_matrix(f.rng, 4, 3);
  const Matrix expert_next = random_matrix(f.rng, 4, 3);
  const DdpgLosses l = ddpg_losses(f.batch, f.actor, f.critic, f.target_actor, f.target_critic, expert, expert_next,
                                   DdpgParams{}, GateMode::deterministic, f.rng);
  EXPECT_EQ(l.targets(3), -1.0);
  const double dist = (f.next_target_actions().row(0) - expert_next.row(0)).norm();
  const Matrix qn = predict(f.target_critic, concat(f.batch.next_inputs, f.next_target_actions()));
  EXPECT_NEAR(l.targets(0), -1.0 + 0.99 * qn(0, 0) - 5.0 * dist, 1e-12);
}

TEST(DdpgLosses, ActorGradientMatchesFiniteDifference) {
  DdpgFixture f;
  const Matrix expert = random_matrix(f.rng, 4, 3, -0.5, 0.5);
  const Matrix expert_next = random_matrix(f.rng, 4, 3);
  DdpgParams p;
  auto actor_loss = [&](const Network& actor) {
    Rng r(1);
    return ddpg_losses(f.batch, actor, f.critic, f.target_actor, f.target_critic, expert, expert_next, p,
                       GateMode::deterministic, r)
        .actor;
  };
  Rng r(1);
  const DdpgLosses l = ddpg_losses(f.batch, f.actor, f.critic, f.target_actor, f.target_critic, expert, expert_next,
                                   p, GateMode::deterministic, r);
  Network probe = f.actor;
  auto params = probe.parameters();
  const auto grads = l.actor_grads.views();
  const double h = 1e-6;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].size(); j += 3) {
      const double saved = params[t][j];
      params[t][j] = saved + h;
      const double up = actor_loss(probe);
      params[t][j] = saved - h;
      const double down = actor_loss(probe);
      params[t][j] = saved;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(grads[t][j], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(DdpgLosses, RequiresExpertActions) {
  DdpgFixture f;
  EXPECT_THROW(ddpg_losses(f.batch, f.actor, f.critic, f.target_actor, f.target_critic, Matrix(), Matrix(),
                           DdpgParams{}, GateMode::deterministic, f.rng),
               InvalidArgument);
}

TEST(Demos, FillFromScriptedExpert) {
  DemoBuffer demos(300);
  Rng rng(3);
  fill_demos(demos, "pointreach", 0.3, rng);
  EXPECT_EQ(demos.size(), 300u);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const Vector& q = demos.query(i);
    ASSERT_EQ(q.size(), 6);
    EXPECT_EQ(demos.action(i), scripted_expert(q.head(3), q.tail(3)));
  }
  DemoBuffer other(10);
  EXPECT_THROW(fill_demos(other, "cartpole", 0.3, rng), ConfigError);
}

TEST(Training, ZeroEpisodesGiveEmptyRecords) {
  AlgoConfig cfg;
  cfg.episodes = 0;
  const RunRecord dqn = train_dqn(cfg);
  EXPECT_TRUE(dqn.train.empty());
  EXPECT_TRUE(dqn.eval.empty());
  EXPECT_EQ(dqn.episodes_trained, 0);
  EXPECT_TRUE(dqn.policy.identical_to(mlp_new(std::vector<int>{4, 64, 160, 2}, Activation::relu, 0)));

  cfg.algo = Algo::ppo;
  EXPECT_TRUE(train_ppo(cfg).train.empty());

  cfg.algo = Algo::ddpg_her_dex;
  cfg.env = "pointreach";
  cfg.ddpg.demo_buffer = 50;
  const RunRecord dd = train_ddpg_her_dex(cfg);
  EXPECT_TRUE(dd.train.empty());
  EXPECT_FALSE(dd.demos.has_value());  // nothing collected without training
}

TEST(Training, EarlyStopLeavesNoRowsAfterFirstPassingEval) {
  AlgoConfig cfg;
  cfg.env = "acrobot";
  cfg.episodes = 60;
  cfg.target_reward = -400.0;  // easy to meet
  const RunRecord r = train_dqn(cfg);
  ASSERT_TRUE(r.convergence_episode.has_value());
  EXPECT_EQ(r.train.back().episode, *r.convergence_episode);
  EXPECT_EQ(r.eval.back().episode, *r.convergence_episode);
  EXPECT_EQ(r.episodes_trained, *r.convergence_episode);
  for (const auto& e : r.eval)
    if (e.episode < *r.convergence_episode) {
      EXPECT_LT(e.mean, -400.0);
    }
}

TEST(Training, SameConfigSameRecord) {
  AlgoConfig cfg;
  cfg.episodes = 30;
  cfg.sparsity = Regularizer::l0;
  cfg.lambda_c = 0.05;
  cfg.dqn.learning_starts = 64;
  const RunRecord a = train_dqn(cfg);
  const RunRecord b = train_dqn(cfg);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].ret, b.train[i].ret);
    EXPECT_EQ(a.train[i].loss, b.train[i].loss);
  }
  EXPECT_TRUE(a.policy.identical_to(b.policy));
}

TEST(Config, ValidationRejectsNonsense) {
  AlgoConfig cfg;
  cfg.episodes = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AlgoConfig{};
  cfg.env = "nowhere";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AlgoConfig{};
  cfg.algo = Algo::ddpg_her_dex;
  EXPECT_THROW(cfg.validate(), ConfigError);  // cartpole has discrete actions
}
