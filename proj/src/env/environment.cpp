#include "dodt/env/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dodt::env {

namespace {
thread_local std::uint64_t t_env_calls = 0;
}

std::uint64_t thread_env_calls() { return t_env_calls; }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<double> EnvSpec::normalize_action(
    std::span<const double> action) const {
  std::vector<double> out(act_dim);
  for (std::size_t i = 0; i < act_dim; ++i) {
    const double half = 0.5 * (act_high[i] - act_low[i]);
    const double mid = 0.5 * (act_high[i] + act_low[i]);
    out[i] = (action[i] - mid) / half;
  }
  return out;
}

std::vector<double> EnvSpec::denormalize_action(
    std::span<const double> unit) const {
  std::vector<double> out(act_dim);
  for (std::size_t i = 0; i < act_dim; ++i) {
    const double half = 0.5 * (act_high[i] - act_low[i]);
    const double mid = 0.5 * (act_high[i] + act_low[i]);
    out[i] = mid + half * unit[i];
  }
  return out;
}

Environment::Environment(EnvSpec spec) : spec_(std::move(spec)) {
  if (spec_.obs_dim == 0 || spec_.act_dim == 0 || spec_.max_episode_steps == 0 ||
      spec_.act_low.size() != spec_.act_dim ||
      spec_.act_high.size() != spec_.act_dim) {
    throw std::invalid_argument("EnvSpec: inconsistent dimensions for " +
                                spec_.name);
  }
  for (std::size_t i = 0; i < spec_.act_dim; ++i) {
    if (!(spec_.act_low[i] < spec_.act_high[i])) {
      throw std::invalid_argument("EnvSpec: act_low must be below act_high");
    }
  }
}

std::vector<double> Environment::reset(std::uint64_t seed) {
  ++t_env_calls;
  ++reset_count_;
  std::mt19937_64 rng(seed);
  episode_steps_ = 0;
  needs_reset_ = false;
  return on_reset(rng);
}

StepResult Environment::step(std::span<const double> action) {
  ++t_env_calls;
  if (needs_reset_) {
    throw std::logic_error(spec_.name + ": step() after episode end; call reset()");
  }
  if (action.size() != spec_.act_dim) {
    throw std::invalid_argument(spec_.name + ": expected action of dim " +
                                std::to_string(spec_.act_dim) + ", got " +
                                std::to_string(action.size()));
  }
  std::vector<double> clipped(action.begin(), action.end());
  bool clipped_any = false;
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    if (std::isnan(clipped[i])) {
      throw std::invalid_argument(spec_.name + ": NaN action component " +
                                  std::to_string(i));
    }
    const double c = std::clamp(clipped[i], spec_.act_low[i], spec_.act_high[i]);
    clipped_any = clipped_any || c != clipped[i];
    clipped[i] = c;
  }
  if (clipped_any) ++clip_count_;
  StepResult result = on_step(clipped);
  ++episode_steps_;
  ++total_steps_;
  if (!result.terminated && episode_steps_ >= spec_.max_episode_steps) {
    result.truncated = true;
  }
  if (result.done()) needs_reset_ = true;
  return result;
}

double wrap_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle + std::numbers::pi, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  a -= std::numbers::pi;
  // fmod maps the upper end to -pi; the interval is (-pi, pi].
  return a == -std::numbers::pi ? std::numbers::pi : a;
}

// --- Pendulum --------------------------------------------------------------

Pendulum::Pendulum()
    : Environment(EnvSpec{"pendulum", 3, 1, {-kMaxTorque}, {kMaxTorque}, 200}) {}

void Pendulum::set_state(double theta, double omega) {
  theta_ = wrap_angle(theta);
  omega_ = omega;
}

std::unique_ptr<Environment> Pendulum::clone() const {
  return std::make_unique<Pendulum>(*this);
}

std::vector<double> Pendulum::on_reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(-std::numbers::pi,
                                               std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  theta_ = wrap_angle(angle(rng));
  omega_ = speed(rng);
  return observe();
}

StepResult Pendulum::on_step(std::span<const double> action) {
  const double u = action[0];
  const double accel =
      -(kGravity / kLength) * std::sin(theta_) + u / (kMass * kLength * kLength);
  const double omega_next =
      std::clamp(omega_ + kDt * accel, -kMaxSpeed, kMaxSpeed);
  theta_ = wrap_angle(theta_ + kDt * omega_);
  omega_ = omega_next;
  const double d = wrap_angle(theta_ - std::numbers::pi);
  StepResult r;
  r.observation = observe();
  r.reward = -(d * d + 0.1 * omega_ * omega_ + 0.001 * u * u);
  return r;
}

std::vector<double> Pendulum::observe() const {
  return {std::cos(theta_), std::sin(theta_), omega_};
}

// --- PointReach ------------------------------------------------------------

PointReach::PointReach()
    : Environment(EnvSpec{"point_reach", 4, 2, {-1.0, -1.0}, {1.0, 1.0}, 100}) {}

void PointReach::set_state(double x, double y, double goal_x, double goal_y) {
  x_ = x;
  y_ = y;
  goal_x_ = goal_x;
  goal_y_ = goal_y;
}

std::unique_ptr<Environment> PointReach::clone() const {
  return std::make_unique<PointReach>(*this);
}

std::vector<double> PointReach::on_reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  x_ = 0.0;
  y_ = 0.0;
  do {
    goal_x_ = coord(rng);
    goal_y_ = coord(rng);
  } while (std::hypot(goal_x_, goal_y_) < 2.0 * kGoalRadius);
  return observe();
}

StepResult PointReach::on_step(std::span<const double> action) {
  StepResult r;
  if (std::hypot(x_ - goal_x_, y_ - goal_y_) > kGoalRadius) {
    x_ += kDt * action[0];
    y_ += kDt * action[1];
  }
  r.observation = observe();
  if (std::hypot(x_ - goal_x_, y_ - goal_y_) <= kGoalRadius) {
    r.reward = 1.0;
    r.terminated = true;
  }
  return r;
}

std::vector<double> PointReach::observe() const {
  return {x_, y_, goal_x_, goal_y_};
}

// --- ChainMdp --------------------------------------------------------------

ChainMdp::ChainMdp() : Environment(EnvSpec{"chain", kStates, 1, {-1.0}, {1.0}, 20}) {}

void ChainMdp::set_state(std::size_t state) {
  if (state >= kStates) throw std::out_of_range("ChainMdp: state out of range");
  state_ = state;
}

std::unique_ptr<Environment> ChainMdp::clone() const {
  return std::make_unique<ChainMdp>(*this);
}

std::vector<double> ChainMdp::always_right_values(double gamma) {
  std::vector<double> v(kStates);
  for (std::size_t i = 0; i < kStates; ++i) {
    v[i] = std::pow(gamma, static_cast<double>(kStates - 1 - i));
  }
  return v;
}

std::vector<double> ChainMdp::on_reset(std::mt19937_64&) {
  state_ = 0;
  return observe();
}

StepResult ChainMdp::on_step(std::span<const double> action) {
  StepResult r;
  if (state_ == kStates - 1) {
    r.reward = 1.0;
    r.terminated = true;
  } else if (action[0] >= 0.0) {
    ++state_;
  } else if (state_ > 0) {
    --state_;
  }
  r.observation = observe();
  return r;
}

std::vector<double> ChainMdp::observe() const {
  std::vector<double> obs(kStates, 0.0);
  obs[state_] = 1.0;
  return obs;
}

std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "point_reach") return std::make_unique<PointReach>();
  if (name == "chain") return std::make_unique<ChainMdp>();
  throw std::invalid_argument("unknown environment '" + std::string(name) +
                              "' (expected pendulum, point_reach or chain)");
}

}  // namespace dodt::env
