#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "dodt/autodiff/gradcheck.hpp"
#include "dodt/autodiff/ops.hpp"
#include "dodt/env/environment.hpp"
#include "dodt/odt/policy.hpp"
#include "dodt/odt/transformer.hpp"

using namespace dodt;
using namespace dodt::odt;
using ad::Rng;
using ad::Tensor;
using replay::TokenSequence;

namespace {

TransformerConfig small_model(std::size_t obs = 3, std::size_t act = 1, std::size_t k = 6) {
  TransformerConfig c;
  c.obs_dim = obs;
  c.act_dim = act;
  c.context = k;
  c.layers = 2;
  c.width = 16;
  c.heads = 2;
  c.max_timestep = 64;
  return c;
}

env::EnvSpec box_spec(std::size_t obs, std::size_t act) {
  return {"box", obs, act, std::vector<double>(act, -1.0), std::vector<double>(act, 1.0), 64};
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<std::vector<double>> snapshot(const nn::ParamList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.push_back(vals(p.tensor));
  return out;
}

TokenSequence random_sequence(std::size_t k, std::size_t valid, std::size_t obs, std::size_t act,
                              Rng& rng) {
  std::normal_distribution<double> n;
  TokenSequence s;
  s.rtg.assign(k, 0.0);
  s.observations.assign(k, std::vector<double>(obs, 0.0));
  s.actions.assign(k, std::vector<double>(act, 0.0));
  s.timesteps.assign(k, 0);
  s.valid_len = valid;
  const std::size_t t0 = std::uniform_int_distribution<std::size_t>(0, 20)(rng);
  for (std::size_t i = k - valid; i < k; ++i) {
    s.rtg[i] = 3.0 * n(rng);
    for (auto& v : s.observations[i]) v = n(rng);
    for (auto& v : s.actions[i]) v = std::tanh(n(rng));
    s.timesteps[i] = t0 + i;
  }
  return s;
}

// Replaces every token that comes after the s_pos token in interleaved order:
// a_pos and all of (g, s, a) at later positions.
void perturb_after(TokenSequence& s, std::size_t pos, Rng& rng) {
  std::normal_distribution<double> n(0.0, 5.0);
  for (auto& v : s.actions[pos]) v = n(rng);
  for (std::size_t i = pos + 1; i < s.context(); ++i) {
    s.rtg[i] = n(rng);
    for (auto& v : s.observations[i]) v = n(rng);
    for (auto& v : s.actions[i]) v = n(rng);
  }
}

// Unit-bounded env whose rewards follow a fixed script; ends when it runs out.
class ScriptedEnv final : public env::Environment {
 public:
  explicit ScriptedEnv(std::vector<double> rewards)
      : Environment({"scripted", 2, 1, {-1.0}, {1.0}, 100}), rewards_(std::move(rewards)) {}

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<ScriptedEnv>(rewards_);
  }

 protected:
  std::vector<double> on_reset(std::mt19937_64&) override {
    t_ = 0;
    return observe();
  }
  env::StepResult on_step(std::span<const double>) override {
    const double r = rewards_[t_++];
    return {observe(), r, t_ == rewards_.size(), false};
  }
  std::vector<double> observe() const override { return {static_cast<double>(t_), 1.0}; }

 private:
  std::vector<double> rewards_;
  std::size_t t_ = 0;
};

// Three fixed Pendulum episodes of 40 random-action steps.
std::vector<replay::Trajectory> pendulum_fixture() {
  env::Pendulum env;
  Rng rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<replay::Trajectory> out;
  for (int e = 0; e < 3; ++e) {
    std::vector<std::vector<double>> obs{env.reset(100 + e)}, acts;
    std::vector<double> rews;
    for (int t = 0; t < 40; ++t) {
      acts.push_back({u(rng)});
      const auto r = env.step(acts.back());
      obs.push_back(r.observation);
      rews.push_back(r.reward);
    }
    out.push_back(replay::Trajectory::make(std::move(obs), std::move(acts), std::move(rews),
                                           replay::Source::kOffline));
  }
  return out;
}

OdtConfig fixture_config(std::uint64_t) {
  OdtConfig c;
  c.model = small_model(3, 1, 8);
  c.model.rtg_scale = 100.0;
  c.batch = 8;
  c.optim.lr = 1e-3;
  return c;
}

double mean_log_std(const OdtAgent& agent, std::span<const replay::OdtSample> samples) {
  ad::NoGradGuard no_grad;
  std::vector<TokenSequence> seqs;
  for (const auto& s : samples) seqs.push_back(s.sequence);
  const auto d = agent.model().forward(seqs);
  double acc = 0.0;
  for (double v : d.log_std.values()) acc += v;
  return acc / static_cast<double>(d.log_std.numel());
}

}  // namespace

TEST_CASE("outputs at a position ignore every later token") {
  Rng init(1);
  const DecisionTransformer model(small_model(3, 2, 6), init);
  Rng rng(2);
  ad::NoGradGuard no_grad;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t valid = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    TokenSequence s = random_sequence(6, valid, 3, 2, rng);
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(6 - valid, 5)(rng);
    const auto before = model.forward(std::span(&s, 1));
    perturb_after(s, pos, rng);
    const auto after = model.forward(std::span(&s, 1));
    for (std::size_t i = 0; i <= pos; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        REQUIRE(before.mean.values()[i * 2 + j] == after.mean.values()[i * 2 + j]);
        REQUIRE(before.log_std.values()[i * 2 + j] == after.log_std.values()[i * 2 + j]);
      }
    }
  }
}

TEST_CASE("with one valid step the prediction depends only on (g_1, s_1)") {
  Rng init(3);
  const DecisionTransformer model(small_model(), init);
  Rng rng(4);
  ad::NoGradGuard no_grad;
  TokenSequence s = random_sequence(1, 1, 3, 1, rng);
  const auto a = vals(model.predict_last(s).mean);
  s.actions[0] = {0.9};
  CHECK(vals(model.predict_last(s).mean) == a);
  s.observations[0][0] += 0.5;
  CHECK(vals(model.predict_last(s).mean) != a);
}

TEST_CASE("left padding matches the unpadded sequence bit for bit") {
  Rng init(5);
  const DecisionTransformer model(small_model(3, 2, 6), init);
  Rng rng(6);
  ad::NoGradGuard no_grad;
  for (std::size_t valid = 1; valid <= 6; ++valid) {
    TokenSequence padded = random_sequence(6, valid, 3, 2, rng);
    // Garbage in the padding slots must not matter either.
    std::normal_distribution<double> n(0.0, 10.0);
    for (std::size_t i = 0; i < padded.pad(); ++i) {
      padded.rtg[i] = n(rng);
      for (auto& v : padded.observations[i]) v = n(rng);
      padded.timesteps[i] = 3;
    }
    TokenSequence tight;
    const auto from = static_cast<std::ptrdiff_t>(padded.pad());
    tight.rtg.assign(padded.rtg.begin() + from, padded.rtg.end());
    tight.observations.assign(padded.observations.begin() + from, padded.observations.end());
    tight.actions.assign(padded.actions.begin() + from, padded.actions.end());
    tight.timesteps.assign(padded.timesteps.begin() + from, padded.timesteps.end());
    tight.valid_len = valid;
    const auto p = model.predict_last(padded);
    const auto t = model.predict_last(tight);
    CHECK(vals(p.mean) == vals(t.mean));
    CHECK(vals(p.log_std) == vals(t.log_std));
  }
}

TEST_CASE("sequences longer than K or with bad valid_len are rejected") {
  Rng init(7);
  const DecisionTransformer model(small_model(3, 1, 4), init);
  Rng rng(8);
  TokenSequence s = random_sequence(5, 5, 3, 1, rng);
  CHECK_THROWS_AS(model.forward(std::span(&s, 1)), std::invalid_argument);
  TokenSequence bad = random_sequence(4, 4, 3, 1, rng);
  bad.valid_len = 5;
  CHECK_THROWS_AS(model.forward(std::span(&bad, 1)), std::invalid_argument);
  bad.valid_len = 0;
  CHECK_THROWS_AS(model.forward(std::span(&bad, 1)), std::invalid_argument);
}

TEST_CASE("attention mask is causal over valid tokens with the diagonal always open") {
  Rng rng(9);
  const TokenSequence s = random_sequence(3, 2, 1, 1, rng);
  const Tensor m = attention_mask(std::span(&s, 1));
  REQUIRE(m.shape() == ad::Shape{1, 9, 9});
  for (std::size_t p = 0; p < 9; ++p) {
    for (std::size_t q = 0; q < 9; ++q) {
      const bool open = q == p || (q <= p && q >= 3);
      CHECK((m.values()[p * 9 + q] == 0.0) == open);
    }
  }
}

TEST_CASE("log-std stays inside [-5, 2] even for extreme weights") {
  Rng init(10);
  const DecisionTransformer model(small_model(), init);
  for (const auto& p : model.parameters()) {
    Tensor t = p.tensor;
    for (auto& v : t.values_mut()) v *= 50.0;
  }
  Rng rng(11);
  const TokenSequence s = random_sequence(6, 6, 3, 1, rng);
  ad::NoGradGuard no_grad;
  const auto d = model.forward(std::span(&s, 1));
  for (double v : d.log_std.values()) {
    CHECK(v >= kMinLogStd);
    CHECK(v <= kMaxLogStd);
  }
  for (double v : d.mean.values()) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("seed-0 transformer mean golden value") {
  Rng init(0);
  const DecisionTransformer model(small_model(3, 2, 4), init);
  TokenSequence s;
  s.valid_len = 3;
  s.rtg = {0.0, 1.5, 1.0, 0.25};
  s.observations = {{0, 0, 0}, {0.1, -0.2, 0.3}, {0.4, 0.5, -0.6}, {-0.7, 0.8, 0.9}};
  s.actions = {{0, 0}, {0.5, -0.5}, {0.25, 0.75}, {0, 0}};
  s.timesteps = {0, 4, 5, 6};
  ad::NoGradGuard no_grad;
  const auto mean = vals(model.predict_last(s).mean);
  const std::vector<double> golden = {
#include "golden_odt_mean.inc"
  };
  REQUIRE(mean.size() == golden.size());
  for (std::size_t i = 0; i < mean.size(); ++i) CHECK(mean[i] == doctest::Approx(golden[i]).epsilon(1e-12));
}

TEST_CASE("NLL at the predicted means with a fixed log-std is the Gaussian constant") {
  const auto spec = box_spec(3, 2);
  OdtConfig cfg;
  cfg.model = small_model(3, 2, 5);
  OdtAgent agent(spec, cfg, 12);
  const double log_std = -4.0;
  // Pin the log-std outputs: zero their head weights and set the bias so that
  // min + half_range * (tanh(b) + 1) == log_std.
  const double half = 0.5 * (kMaxLogStd - kMinLogStd);
  for (const auto& p : agent.parameters()) {
    Tensor t = p.tensor;
    if (p.name == "head.weight") {
      for (std::size_t r = 0; r < t.dim(0); ++r)
        for (std::size_t c = 2; c < 4; ++c) t.values_mut()[r * 4 + c] = 0.0;
    } else if (p.name == "head.bias") {
      t.values_mut()[2] = t.values_mut()[3] = std::atanh((log_std - kMinLogStd) / half - 1.0);
    }
  }
  Rng rng(13);
  replay::OdtSample sample{random_sequence(5, 4, 3, 2, rng), 0, 0, nullptr};
  // Fill actions front to back: the mean at step i never depends on a_i.
  {
    ad::NoGradGuard no_grad;
    for (std::size_t i = sample.sequence.pad(); i < 5; ++i) {
      const auto d = agent.model().forward(std::span(&sample.sequence, 1));
      sample.sequence.actions[i] = {d.mean.values()[i * 2], d.mean.values()[i * 2 + 1]};
    }
  }
  OdtLosses parts;
  {
    ad::NoGradGuard no_grad;
    agent.loss(std::span(&sample, 1), &parts);
  }
  const double expected = 2.0 * (log_std + 0.5 * std::log(2.0 * std::numbers::pi));
  CHECK(parts.nll == doctest::Approx(expected).epsilon(1e-9));
  CHECK(parts.entropy == doctest::Approx(2.0 * (log_std + 0.5 + 0.5 * std::log(2.0 * std::numbers::pi))).epsilon(1e-9));
  CHECK(parts.total == doctest::Approx(parts.nll));
}

TEST_CASE("NLL gradient matches finite differences") {
  const auto spec = box_spec(3, 2);
  OdtConfig cfg;
  cfg.model = small_model(3, 2, 3);
  cfg.model.width = 8;
  cfg.entropy_coef = 0.3;
  OdtAgent agent(spec, cfg, 14);
  Rng rng(15);
  std::vector<replay::OdtSample> samples;
  for (std::size_t v : {3, 2}) samples.push_back({random_sequence(3, v, 3, 2, rng), 0, 0, nullptr});
  std::vector<Tensor> params = nn::tensors(agent.parameters());
  Rng pick(16);
  const auto res = ad::finite_diff_check_params([&] { return agent.loss(samples); }, params, 1e-5,
                                                6, pick);
  CHECK(res.max_rel_error <= 1e-3);
}

TEST_CASE("training_step with zero learning rate leaves parameters unchanged") {
  const auto fixture = pendulum_fixture();
  OdtConfig cfg = fixture_config(0);
  cfg.optim.lr = 0.0;
  OdtAgent agent(env::Pendulum().spec(), cfg, 17);
  replay::TrajectoryBuffer buffer(10, replay::EvictionPolicy::kOldest);
  for (const auto& t : fixture) buffer.insert(t);
  const auto before = snapshot(agent.parameters());
  for (std::uint64_t i = 0; i < 3; ++i) {
    const auto update = agent.training_step(buffer, i);
    CHECK_FALSE(update.losses.skipped);
    CHECK(update.sampled.size() == cfg.batch);
  }
  CHECK(snapshot(agent.parameters()) == before);
}

TEST_CASE("non-finite losses skip the update") {
  OdtConfig cfg;
  cfg.model = small_model();
  OdtAgent agent(box_spec(3, 1), cfg, 18);
  Rng rng(19);
  replay::OdtSample sample{random_sequence(6, 6, 3, 1, rng), 0, 0, nullptr};
  sample.sequence.observations[5][1] = std::numeric_limits<double>::quiet_NaN();
  const auto before = snapshot(agent.parameters());
  const auto parts = agent.training_step(std::span(&sample, 1));
  CHECK(parts.skipped);
  CHECK(snapshot(agent.parameters()) == before);
}

TEST_CASE("300 training steps lower the NLL on a 3-trajectory fixture") {
  const auto fixture = pendulum_fixture();
  replay::TrajectoryBuffer buffer(10, replay::EvictionPolicy::kOldest);
  for (const auto& t : fixture) buffer.insert(t);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    OdtAgent agent(env::Pendulum().spec(), fixture_config(seed), seed);
    // Held-out evaluation batch, fixed across the run.
    const auto probe = replay::sample_subsequences_for_odt(buffer, 32, 8, 1.0, 1000 + seed);
    OdtLosses initial, final;
    {
      ad::NoGradGuard no_grad;
      agent.loss(probe, &initial);
    }
    for (std::uint64_t i = 0; i < 300; ++i) agent.training_step(buffer, seed * 10000 + i);
    {
      ad::NoGradGuard no_grad;
      agent.loss(probe, &final);
    }
    CHECK(final.nll < initial.nll);
  }
}

TEST_CASE("a large entropy bonus raises the predicted log-std") {
  const auto fixture = pendulum_fixture();
  replay::TrajectoryBuffer buffer(10, replay::EvictionPolicy::kOldest);
  for (const auto& t : fixture) buffer.insert(t);
  const auto probe = replay::sample_subsequences_for_odt(buffer, 16, 8, 1.0, 77);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    double log_std[2];
    for (int arm = 0; arm < 2; ++arm) {
      OdtConfig cfg = fixture_config(seed);
      cfg.entropy_coef = arm == 0 ? 0.0 : 10.0;
      OdtAgent agent(env::Pendulum().spec(), cfg, seed);
      for (std::uint64_t i = 0; i < 200; ++i) agent.training_step(buffer, seed * 10000 + i);
      log_std[arm] = mean_log_std(agent, probe);
    }
    CHECK(log_std[1] > log_std[0]);
  }
}

TEST_CASE("rollout RTG bookkeeping: rewards [1, 2] from 10 give [10, 9, 7]") {
  OdtConfig cfg;
  cfg.model = small_model(2, 1, 4);
  OdtAgent agent(box_spec(2, 1), cfg, 20);
  ScriptedEnv env({1.0, 2.0});
  const auto r = agent.rollout_online(env, 0, 10.0, RolloutMode::kExplore);
  CHECK(r.rtg == std::vector<double>{10.0, 9.0, 7.0});
  CHECK(r.trajectory.source == replay::Source::kOdt);
  CHECK(r.trajectory.length() == 2);

  ScriptedEnv zeros(std::vector<double>(7, 0.0));
  const auto z = agent.rollout_online(zeros, 0, 3.5, RolloutMode::kEval);
  CHECK(z.rtg == std::vector<double>(8, 3.5));
}

TEST_CASE("rollout RTG satisfies g_{t+1} + r_t = g_t on Pendulum") {
  OdtConfig cfg;
  cfg.model = small_model(3, 1, 5);
  OdtAgent agent(env::Pendulum().spec(), cfg, 21);
  env::Pendulum env;
  const auto r = agent.rollout_online(env, 5, -123.456, RolloutMode::kExplore, 60);
  REQUIRE(r.rtg.size() == 61);
  for (std::size_t t = 0; t < 60; ++t) {
    const double g = r.rtg[t], rew = r.trajectory.rewards[t];
    const double tol = std::numeric_limits<double>::epsilon() * std::max(std::abs(g), std::abs(rew));
    CHECK(std::abs(r.rtg[t + 1] + rew - g) <= tol);
  }
  for (const auto& a : r.trajectory.actions) CHECK(std::abs(a[0]) <= 2.0);
}

TEST_CASE("seeded rollouts are reproducible") {
  OdtConfig cfg;
  cfg.model = small_model(3, 1, 5);
  env::Pendulum env;
  OdtAgent a(env.spec(), cfg, 22), b(env.spec(), cfg, 22);
  for (auto mode : {RolloutMode::kEval, RolloutMode::kExplore}) {
    const auto ra = a.rollout_online(env, 9, -50.0, mode, 30);
    const auto rb = b.rollout_online(env, 9, -50.0, mode, 30);
    CHECK(ra.trajectory.actions == rb.trajectory.actions);
    CHECK(ra.trajectory.rewards == rb.trajectory.rewards);
  }
  const auto e1 = a.rollout_online(env, 9, -50.0, RolloutMode::kEval, 30);
  const auto e2 = a.rollout_online(env, 9, -50.0, RolloutMode::kEval, 30);
  CHECK(e1.trajectory.actions == e2.trajectory.actions);
}

TEST_CASE("evaluate: episode count, mean identity and zero spread on a deterministic env") {
  OdtConfig cfg;
  cfg.model = small_model(5, 1, 4);
  env::ChainMdp chain;
  OdtAgent agent(chain.spec(), cfg, 23);
  const auto resets = chain.reset_count();
  const auto res = agent.evaluate(chain, 1.0, 5, 99);
  CHECK(chain.reset_count() - resets == 5);
  REQUIRE(res.returns.size() == 5);
  double sum = 0.0;
  for (double r : res.returns) sum += r;
  CHECK(res.mean == sum / 5.0);
  CHECK(res.std == 0.0);
  CHECK_THROWS_AS(agent.evaluate(chain, 1.0, 0, 99), std::invalid_argument);

  env::Pendulum pendulum;
  OdtAgent p(pendulum.spec(), [] {
    OdtConfig c;
    c.model = small_model(3, 1, 4);
    c.model.max_timestep = 256;
    return c;
  }(), 24);
  const auto one = p.evaluate(pendulum, 0.0, 1, 3);
  CHECK(one.std == 0.0);
  CHECK(one.mean == one.returns[0]);
}
