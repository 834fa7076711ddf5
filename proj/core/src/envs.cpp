#include "splab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splab/errors.hpp"

namespace splab {

void Env::check_can_step() const {
  if (!started_) throw ProtocolError(spec().name + ": step() before reset()");
  if (finished_) throw ProtocolError(spec().name + ": step() on a finished episode");
}

bool Env::count_step(bool terminal, int max_steps) {
  ++steps_;
  const bool truncated = steps_ >= max_steps;
  finished_ = terminal || truncated;
  return truncated;
}

namespace {

int discrete_action(const Vector& action, int n, const std::string& env) {
  if (action.size() != 1) throw InvalidArgument(env + ": discrete action must be a single index");
  const double a = action(0);
  const int idx = static_cast<int>(a);
  if (static_cast<double>(idx) != a || idx < 0 || idx >= n) {
    throw InvalidArgument(env + ": action " + std::to_string(a) + " outside [0, " + std::to_string(n) + ")");
  }
  return idx;
}

}  // namespace

// ---------------------------------------------------------------- CartPole

CartPole::CartPole() {
  spec_.name = "cartpole";
  spec_.obs_dim = 4;
  spec_.action = ActionSpec::discrete(2);
  spec_.max_steps = 500;
  spec_.target_reward = 500.0;
}

Vector CartPole::reset(std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < 4; ++i) state_(i) = rng.uniform(-0.05, 0.05);
  begin_episode();
  return state_;
}

StepResult CartPole::step(const Vector& action) {
  check_can_step();
  const int a = discrete_action(action, 2, spec_.name);
  const double force = a == 1 ? kForce : -kForce;
  const double x = state_(0), x_dot = state_(1), theta = state_(2), theta_dot = state_(3);

  constexpr double total_mass = kCartMass + kPoleMass;
  constexpr double polemass_length = kPoleMass * kHalfLength;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + polemass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

  state_(0) = x + kDt * x_dot;
  state_(1) = x_dot + kDt * x_acc;
  state_(2) = theta + kDt * theta_dot;
  state_(3) = theta_dot + kDt * theta_acc;

  const bool terminal = std::abs(state_(0)) > kXLimit || std::abs(state_(2)) > kThetaLimit;
  count_step(terminal, spec_.max_steps);
  StepResult r;
  r.observation = state_;
  r.reward = 1.0;
  r.terminal = terminal;
  r.done = finished();
  return r;
}

// ----------------------------------------------------------------- Acrobot

namespace {

constexpr double kLink1 = 1.0;
constexpr double kMass1 = 1.0;
constexpr double kMass2 = 1.0;
constexpr double kCom1 = 0.5;
constexpr double kCom2 = 0.5;
constexpr double kMoi = 1.0;
constexpr double kG = 9.8;
constexpr double kMaxVel1 = 4.0 * std::numbers::pi;
constexpr double kMaxVel2 = 9.0 * std::numbers::pi;

double wrap_angle(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  while (x > std::numbers::pi) x -= two_pi;
  while (x < -std::numbers::pi) x += two_pi;
  return x;
}

}  // namespace

Acrobot::Acrobot() {
  spec_.name = "acrobot";
  spec_.obs_dim = 6;
  spec_.action = ActionSpec::discrete(3);
  spec_.max_steps = 500;
  spec_.target_reward = -100.0;
}

Vector Acrobot::observation() const {
  Vector o(6);
  o << std::cos(state_(0)), std::sin(state_(0)), std::cos(state_(1)), std::sin(state_(1)), state_(2), state_(3);
  return o;
}

Vector Acrobot::reset(std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < 4; ++i) state_(i) = rng.uniform(-0.1, 0.1);
  begin_episode();
  return observation();
}

Eigen::Vector4d Acrobot::derivatives(const Eigen::Vector4d& s, double torque) {
  const double theta1 = s(0), theta2 = s(1), dtheta1 = s(2), dtheta2 = s(3);
  const double d1 = kMass1 * kCom1 * kCom1 +
                    kMass2 * (kLink1 * kLink1 + kCom2 * kCom2 + 2.0 * kLink1 * kCom2 * std::cos(theta2)) + kMoi + kMoi;
  const double d2 = kMass2 * (kCom2 * kCom2 + kLink1 * kCom2 * std::cos(theta2)) + kMoi;
  const double phi2 = kMass2 * kCom2 * kG * std::cos(theta1 + theta2 - std::numbers::pi / 2.0);
  const double phi1 = -kMass2 * kLink1 * kCom2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2.0 * kMass2 * kLink1 * kCom2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (kMass1 * kCom1 + kMass2 * kLink1) * kG * std::cos(theta1 - std::numbers::pi / 2.0) + phi2;
  const double ddtheta2 =
      (torque + d2 / d1 * phi1 - kMass2 * kLink1 * kCom2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
      (kMass2 * kCom2 * kCom2 + kMoi - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}

bool Acrobot::tip_above_bar() const { return -std::cos(state_(0)) - std::cos(state_(1) + state_(0)) > 1.0; }

StepResult Acrobot::step(const Vector& action) {
  check_can_step();
  const double torque = static_cast<double>(discrete_action(action, 3, spec_.name)) - 1.0;

  const Eigen::Vector4d& s = state_;
  const Eigen::Vector4d k1 = derivatives(s, torque);
  const Eigen::Vector4d k2 = derivatives(s + 0.5 * kDt * k1, torque);
  const Eigen::Vector4d k3 = derivatives(s + 0.5 * kDt * k2, torque);
  const Eigen::Vector4d k4 = derivatives(s + kDt * k3, torque);
  Eigen::Vector4d next = s + kDt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  next(0) = wrap_angle(next(0));
  next(1) = wrap_angle(next(1));
  next(2) = std::clamp(next(2), -kMaxVel1, kMaxVel1);
  next(3) = std::clamp(next(3), -kMaxVel2, kMaxVel2);
  state_ = next;

  const bool terminal = tip_above_bar();
  count_step(terminal, spec_.max_steps);
  StepResult r;
  r.observation = observation();
  r.reward = terminal ? 0.0 : -1.0;
  r.terminal = terminal;
  r.done = finished();
  return r;
}

// -------------------------------------------------------------- PointReach

PointReach::PointReach() {
  spec_.name = "pointreach";
  spec_.obs_dim = 3;
  spec_.action = ActionSpec::continuous(3, -1.0, 1.0);
  spec_.max_steps = kHorizon;
  // Mean return of an agent that reaches every goal in about ten steps.
  spec_.target_reward = -10.0;
  spec_.goal_dim = 3;
}

Vector PointReach::reset(std::uint64_t seed) {
  Rng rng(seed);
  position_ = Vector::Zero(3);
  goal_.resize(3);
  for (int i = 0; i < 3; ++i) goal_(i) = rng.uniform(-kGoalRange, kGoalRange);
  begin_episode();
  return position_;
}

double PointReach::compute_reward(const Vector& achieved, const Vector& goal) {
  return is_success(achieved, goal) ? 0.0 : -1.0;
}

bool PointReach::is_success(const Vector& achieved, const Vector& goal) {
  return (achieved - goal).norm() < kTolerance;
}

StepResult PointReach::step(const Vector& action) {
  check_can_step();
  if (action.size() != 3) throw InvalidArgument("pointreach: action must have 3 components");
  if (!action.allFinite()) throw InvalidArgument("pointreach: non-finite action");
  position_ += kStepScale * action.cwiseMax(-1.0).cwiseMin(1.0);

  const bool success = is_success(position_, goal_);
  count_step(success, spec_.max_steps);
  StepResult r;
  r.observation = position_;
  r.reward = success ? 0.0 : -1.0;
  r.terminal = success;
  r.done = finished();
  r.achieved_goal = position_;
  return r;
}

Vector scripted_expert(const Vector& position, const Vector& goal) {
  return ((goal - position) / PointReach::kStepScale).cwiseMax(-1.0).cwiseMin(1.0);
}

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "cartpole") return std::make_unique<CartPole>();
  if (name == "acrobot") return std::make_unique<Acrobot>();
  if (name == "pointreach") return std::make_unique<PointReach>();
  throw ConfigError("unknown environment '" + name + "'");
}

EnvSpec env_spec(const std::string& name) { return make_env(name)->spec(); }

}  // namespace splab
