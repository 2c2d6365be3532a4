#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dodt::env {

struct EnvSpec {
  std::string name;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::vector<double> act_low;
  std::vector<double> act_high;
  std::size_t max_episode_steps = 0;

  // Maps an action in [act_low, act_high] to [-1, 1] per dimension.
  std::vector<double> normalize_action(std::span<const double> action) const;
  std::vector<double> denormalize_action(std::span<const double> unit) const;
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;

  bool done() const { return terminated || truncated; }
};

// Number of reset()/step() calls made on any environment by the calling
// thread. Used to audit code paths that must not touch an environment.
std::uint64_t thread_env_calls();

// Well-mixed seed for the index-th episode of a run seeded with `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Deterministic, seedable environment. reset() fully re-initializes from the
// seed; step() clips out-of-bounds actions (counting them), rejects NaN, and
// truncates at max_episode_steps.
class Environment {
 public:
  explicit Environment(EnvSpec spec);
  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }

  std::vector<double> reset(std::uint64_t seed);
  StepResult step(std::span<const double> action);

  std::uint64_t clip_count() const { return clip_count_; }
  std::uint64_t reset_count() const { return reset_count_; }
  std::uint64_t total_steps() const { return total_steps_; }
  std::size_t episode_steps() const { return episode_steps_; }

  virtual std::unique_ptr<Environment> clone() const = 0;

 protected:
  virtual std::vector<double> on_reset(std::mt19937_64& rng) = 0;
  // Receives an in-bounds action; returns the next observation and reward.
  virtual StepResult on_step(std::span<const double> action) = 0;
  virtual std::vector<double> observe() const = 0;

 private:
  EnvSpec spec_;
  std::uint64_t clip_count_ = 0;
  std::uint64_t reset_count_ = 0;
  std::uint64_t total_steps_ = 0;
  std::size_t episode_steps_ = 0;
  bool needs_reset_ = true;
};

// Pendulum swing-up. theta = 0 hangs straight down; the goal is theta = pi.
//   omega' = clamp(omega + dt * (-(g/l) sin(theta) + u / (m l^2)), +-max_speed)
//   theta' = wrap(theta + dt * omega)           (explicit Euler, old omega)
//   reward = -(d^2 + 0.1 omega'^2 + 0.001 u^2), d = wrap(theta' - pi)
// Observation (cos theta, sin theta, omega); wrap() maps to (-pi, pi].
class Pendulum final : public Environment {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMass = 1.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

  Pendulum();

  void set_state(double theta, double omega);
  double theta() const { return theta_; }
  double omega() const { return omega_; }

  std::unique_ptr<Environment> clone() const override;

 protected:
  std::vector<double> on_reset(std::mt19937_64& rng) override;
  StepResult on_step(std::span<const double> action) override;
  std::vector<double> observe() const override;

 private:
  double theta_ = 0.0;
  double omega_ = 0.0;
};

// 2-D point mass with velocity actions in [-1, 1]^2, pos' = pos + dt * a.
// Starts at the origin with a goal drawn uniformly from [-1, 1]^2 (at least
// twice the goal radius away). Reward 1 and termination once within the goal
// radius; 0 otherwise. Observation (x, y, goal_x, goal_y).
class PointReach final : public Environment {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kGoalRadius = 0.1;

  PointReach();

  void set_state(double x, double y, double goal_x, double goal_y);
  std::unique_ptr<Environment> clone() const override;

 protected:
  std::vector<double> on_reset(std::mt19937_64& rng) override;
  StepResult on_step(std::span<const double> action) override;
  std::vector<double> observe() const override;

 private:
  double x_ = 0.0, y_ = 0.0, goal_x_ = 0.0, goal_y_ = 0.0;
};

// Five-state deterministic chain. Action sign picks the direction (>= 0 moves
// right); the left end is a wall. Any action taken in the rightmost state
// yields reward 1 and terminates, so under always-right from state i the
// discounted return is gamma^(4 - i). Observation is a one-hot of the state.
class ChainMdp final : public Environment {
 public:
  static constexpr std::size_t kStates = 5;

  ChainMdp();

  void set_state(std::size_t state);
  std::size_t state() const { return state_; }
  std::unique_ptr<Environment> clone() const override;

  // Exact values of every state under always-right.
  static std::vector<double> always_right_values(double gamma);

 protected:
  std::vector<double> on_reset(std::mt19937_64& rng) override;
  StepResult on_step(std::span<const double> action) override;
  std::vector<double> observe() const override;

 private:
  std::size_t state_ = 0;
};

double wrap_angle(double angle);

// "pendulum", "point_reach" or "chain"; throws on unknown names.
std::unique_ptr<Environment> make_env(std::string_view name);

}  // namespace dodt::env
