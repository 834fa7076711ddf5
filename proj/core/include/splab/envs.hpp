#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splab/random.hpp"
#include "splab/tensor.hpp"

namespace splab {

struct ActionSpec {
  enum class Kind { discrete, continuous };
  Kind kind = Kind::discrete;
  int n = 2;  // discrete action count or continuous dimension
  double low = -1.0;
  double high = 1.0;

  static ActionSpec discrete(int n) { return {Kind::discrete, n, 0.0, 0.0}; }
  static ActionSpec continuous(int dim, double low, double high) { return {Kind::continuous, dim, low, high}; }
  bool is_discrete() const { return kind == Kind::discrete; }
};

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  ActionSpec action;
  int max_steps = 1;
  double target_reward = 0.0;
  int goal_dim = 0;  // 0 for non-goal environments
};

struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool done = false;       // episode over (terminal or time limit)
  bool terminal = false;   // true terminal state; bootstrapping stops here
  std::optional<Vector> achieved_goal;
};

// Discrete environments take the action index in action[0].
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Vector& action) = 0;

  StepResult step(int discrete_action) { return step(Vector::Constant(1, discrete_action)); }

  virtual bool goal_conditioned() const { return false; }
  virtual Vector desired_goal() const { return {}; }
  virtual Vector achieved_goal() const { return {}; }

  int steps_taken() const { return steps_; }
  bool finished() const { return finished_; }

 protected:
  void begin_episode() {
    steps_ = 0;
    finished_ = false;
    started_ = true;
  }
  // Throws ProtocolError if the episode is over or never started.
  void check_can_step() const;
  // Advances the step counter; returns true when the horizon is reached.
  bool count_step(bool terminal, int max_steps);

 private:
  int steps_ = 0;
  bool finished_ = false;
  bool started_ = false;
};

// Classic cart-pole with Euler integration; +1 per step, 500-step horizon.
class CartPole final : public Env {
 public:
  CartPole();
  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  using Env::step;

  // x, x_dot, theta, theta_dot
  const Eigen::Vector4d& state() const { return state_; }
  void set_state(const Eigen::Vector4d& s) { state_ = s; }

  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kForce = 10.0;
  static constexpr double kDt = 0.02;
  static constexpr double kXLimit = 2.4;
  static constexpr double kThetaLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;

 private:
  EnvSpec spec_;
  Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
};

// Two-link swing-up with RK4 over one 0.2 s step; -1 per step until the tip
// clears the bar, 500-step horizon.
class Acrobot final : public Env {
 public:
  Acrobot();
  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  using Env::step;

  // theta1, theta2, dtheta1, dtheta2
  const Eigen::Vector4d& state() const { return state_; }
  void set_state(const Eigen::Vector4d& s) { state_ = s; }
  Vector observation() const;

  static Eigen::Vector4d derivatives(const Eigen::Vector4d& s, double torque);

  static constexpr double kDt = 0.2;

 private:
  bool tip_above_bar() const;

  EnvSpec spec_;
  Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
};

// 3-D point reaching a sampled goal. Actions are velocity commands clipped to
// [-1, 1]^3 and scaled by 0.05; reward 0 inside a 0.025 radius, else -1.
class PointReach final : public Env {
 public:
  PointReach();
  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  using Env::step;

  bool goal_conditioned() const override { return true; }
  Vector desired_goal() const override { return goal_; }
  Vector achieved_goal() const override { return position_; }

  void set_position(const Vector& p) { position_ = p; }
  void set_goal(const Vector& g) { goal_ = g; }

  static double compute_reward(const Vector& achieved, const Vector& goal);
  static bool is_success(const Vector& achieved, const Vector& goal);

  static constexpr double kStepScale = 0.05;
  static constexpr double kTolerance = 0.025;
  static constexpr double kGoalRange = 0.2;  // goals ~ U[-0.2, 0.2]^3
  static constexpr int kHorizon = 50;

 private:
  EnvSpec spec_;
  Vector position_ = Vector::Zero(3);
  Vector goal_ = Vector::Zero(3);
};

// Proportional controller used to generate demonstrations.
Vector scripted_expert(const Vector& position, const Vector& goal);

// "cartpole", "acrobot", "pointreach". Throws ConfigError otherwise.
std::unique_ptr<Env> make_env(const std::string& name);
EnvSpec env_spec(const std::string& name);

}  // namespace splab
