#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "dodt/env/environment.hpp"

using namespace dodt::env;

TEST_CASE("pendulum reset is deterministic per seed") {
  Pendulum a, b;
  CHECK(a.reset(0) == b.reset(0));
  CHECK(a.reset(0) == a.reset(0));
}

TEST_CASE("point_reach starts at origin with a seeded goal") {
  PointReach env;
  const auto obs = env.reset(0);
  REQUIRE(obs.size() == 4);
  CHECK(obs[0] == 0.0);
  CHECK(obs[1] == 0.0);
  // Independent draw with the same generator and distribution.
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  double gx = 0, gy = 0;
  do {
    gx = coord(rng);
    gy = coord(rng);
  } while (std::hypot(gx, gy) < 0.2);
  CHECK(obs[2] == gx);
  CHECK(obs[3] == gy);
}

TEST_CASE("different seeds give different initial observations") {
  for (const char* name : {"pendulum", "point_reach"}) {
    auto env = make_env(name);
    std::size_t collisions = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto o1 = env->reset(2 * s);
      const auto o2 = env->reset(2 * s + 1);
      collisions += o1 == o2 ? 1 : 0;
    }
    CHECK(collisions == 0);
  }
}

TEST_CASE("pendulum at the stable equilibrium with zero torque stays put") {
  Pendulum env;
  env.reset(0);
  env.set_state(0.0, 0.0);
  const double u = 0.0;
  const auto r = env.step(std::span(&u, 1));
  CHECK(env.theta() == 0.0);
  CHECK(env.omega() == 0.0);
  CHECK(r.observation == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("pendulum one Euler tick from horizontal") {
  Pendulum env;
  env.reset(0);
  env.set_state(std::numbers::pi / 2, 0.0);
  const double u = 0.0;
  env.step(std::span(&u, 1));
  // omega' = 0 + 0.05 * (-(10 / 1) * sin(pi/2)) = -0.5; theta uses the old omega.
  CHECK(env.omega() == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(env.theta() == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
}

TEST_CASE("pendulum reward is zero when upright and still") {
  Pendulum env;
  env.reset(0);
  env.set_state(std::numbers::pi, 0.0);
  const double u = 0.0;
  const auto r = env.step(std::span(&u, 1));
  // sin(pi) is not exactly zero, so the pendulum drifts by a few ulps.
  CHECK(r.reward == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("point_reach at the goal terminates with reward 1") {
  PointReach env;
  env.reset(0);
  env.set_state(0.3, -0.2, 0.3, -0.2);
  const std::vector<double> a{0.0, 0.0};
  const auto r = env.step(a);
  CHECK(r.reward == 1.0);
  CHECK(r.terminated);
  CHECK_FALSE(r.truncated);
}

TEST_CASE("NaN actions are rejected") {
  Pendulum env;
  env.reset(0);
  const double nan = std::nan("");
  CHECK_THROWS_AS(env.step(std::span(&nan, 1)), std::invalid_argument);
}

TEST_CASE("out-of-bounds actions are clipped and counted") {
  Pendulum a, b;
  a.reset(3);
  b.reset(3);
  const double big = 50.0, bound = Pendulum::kMaxTorque;
  const auto ra = a.step(std::span(&big, 1));
  const auto rb = b.step(std::span(&bound, 1));
  CHECK(ra.observation == rb.observation);
  CHECK(ra.reward == rb.reward);
  CHECK(a.clip_count() == 1);
  CHECK(b.clip_count() == 0);
}

TEST_CASE("episodes truncate at max_episode_steps and require reset") {
  Pendulum env;
  env.reset(1);
  const double u = 0.0;
  StepResult r;
  for (std::size_t t = 0; t < env.spec().max_episode_steps; ++t) {
    CHECK_FALSE(r.done());
    r = env.step(std::span(&u, 1));
  }
  CHECK(r.truncated);
  CHECK_FALSE(r.terminated);
  CHECK_THROWS_AS(env.step(std::span(&u, 1)), std::logic_error);
}

TEST_CASE("same seed and actions give bit-identical trajectories") {
  for (const char* name : {"pendulum", "point_reach", "chain"}) {
    auto e1 = make_env(name);
    auto e2 = make_env(name);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(-1.5, 1.5);
    auto o1 = e1->reset(42);
    auto o2 = e2->reset(42);
    CHECK(o1 == o2);
    for (std::size_t t = 0; t < e1->spec().max_episode_steps; ++t) {
      std::vector<double> a(e1->spec().act_dim);
      for (auto& v : a) v = unit(rng);
      const auto r1 = e1->step(a);
      const auto r2 = e2->step(a);
      CHECK(r1.observation == r2.observation);
      CHECK(r1.reward == r2.reward);
      if (r1.done()) break;
    }
  }
}

TEST_CASE("observations and rewards stay finite for in-bounds actions") {
  for (const char* name : {"pendulum", "point_reach", "chain"}) {
    auto env = make_env(name);
    std::mt19937_64 rng(5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      env->reset(seed);
      const auto& spec = env->spec();
      for (std::size_t t = 0; t < spec.max_episode_steps; ++t) {
        std::vector<double> a(spec.act_dim);
        for (std::size_t i = 0; i < a.size(); ++i) {
          a[i] = std::uniform_real_distribution<double>(spec.act_low[i],
                                                        spec.act_high[i])(rng);
        }
        const auto r = env->step(a);
        CHECK(std::isfinite(r.reward));
        for (double v : r.observation) CHECK(std::isfinite(v));
        if (r.done()) break;
      }
    }
  }
}

TEST_CASE("wrapped angles lie in (-pi, pi]") {
  CHECK(wrap_angle(std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(-std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(3 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> any(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = any(rng);
    const double w = wrap_angle(a);
    CHECK(w > -std::numbers::pi);
    CHECK(w <= std::numbers::pi);
    CHECK(std::cos(w) == doctest::Approx(std::cos(a)).epsilon(1e-9));
  }
}

TEST_CASE("chain optimal values match value iteration") {
  const double gamma = 0.9;
  // Value iteration over {left, right}; state 4 pays 1 and ends the episode.
  const std::size_t n = ChainMdp::kStates;
  std::vector<double> v(n, 0.0);
  for (int sweep = 0; sweep < 200; ++sweep) {
    std::vector<double> next(n);
    for (std::size_t s = 0; s < n; ++s) {
      if (s == n - 1) {
        next[s] = 1.0;
        continue;
      }
      const double right = gamma * v[s + 1];
      const double left = gamma * v[s == 0 ? 0 : s - 1];
      next[s] = std::max(left, right);
    }
    v = next;
  }
  const auto analytic = ChainMdp::always_right_values(gamma);
  for (std::size_t s = 0; s < n; ++s) {
    CHECK(analytic[s] == doctest::Approx(v[s]).epsilon(1e-12));
  }
  CHECK(analytic[0] == doctest::Approx(std::pow(gamma, 4)).epsilon(1e-15));

  // Rolling out always-right from the left end realizes the same return.
  ChainMdp env;
  env.reset(0);
  double ret = 0.0, discount = 1.0;
  const double right = 1.0;
  for (;;) {
    const auto r = env.step(std::span(&right, 1));
    ret += discount * r.reward;
    discount *= gamma;
    if (r.done()) break;
  }
  CHECK(ret == doctest::Approx(std::pow(gamma, 4)).epsilon(1e-15));
}

TEST_CASE("environment call counter is per thread and counts resets and steps") {
  const auto before = thread_env_calls();
  ChainMdp env;
  env.reset(0);
  const double a = -1.0;
  env.step(std::span(&a, 1));
  CHECK(thread_env_calls() - before == 2);
}

TEST_CASE("action normalization round-trips") {
  Pendulum env;
  const auto& spec = env.spec();
  const std::vector<double> a{1.3};
  const auto unit = spec.normalize_action(a);
  CHECK(unit[0] == doctest::Approx(0.65));
  CHECK(spec.denormalize_action(unit)[0] == doctest::Approx(1.3));
}

TEST_CASE("unknown environment names are rejected") {
  CHECK_THROWS_AS(make_env("cartpole"), std::invalid_argument);
}
