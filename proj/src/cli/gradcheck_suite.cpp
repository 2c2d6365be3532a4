#include "dodt/cli/gradcheck_suite.hpp"

#include <cstdio>
#include <ostream>
#include <random>

#include "dodt/autodiff/gradcheck.hpp"
#include "dodt/autodiff/op_suite.hpp"
#include "dodt/odt/policy.hpp"
#include "dodt/world/behavior.hpp"
#include "dodt/world/world_model.hpp"

namespace dodt::cli {

namespace {

using ad::Rng;
using ad::Tensor;

constexpr std::size_t kObs = 3, kAct = 2, kBatch = 3, kSteps = 4;
constexpr std::size_t kCoordsPerParam = 6;
constexpr double kStep = 1e-5;

world::WorldModelConfig small_world() {
  world::WorldModelConfig c;
  c.obs_dim = kObs;
  c.act_dim = kAct;
  c.deter = 8;
  c.stoch = 4;
  c.hidden = 12;
  c.embed = 8;
  c.free_nats = 0.0;  // keep the KL term smooth
  return c;
}

// Zero biases and the zero initial state put the first step's relus exactly on
// their kinks, where central differences read 1/2. Jitter moves off them.
void jitter(const nn::ParamList& params, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (double& v : t.values_mut()) v += n(rng);
  }
}

std::string shape_text(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]";
}

GradCheckLine composite(std::string name, const std::function<Tensor()>& loss,
                        const nn::ParamList& params, std::string detail, Rng& pick) {
  std::vector<Tensor> ts = nn::tensors(params);
  const auto res = ad::finite_diff_check_params(loss, ts, kStep, kCoordsPerParam, pick);
  return {"composite", std::move(name), res.max_rel_error, std::move(detail),
          kCompositeTolerance};
}

world::SequenceInputs random_sequences(Rng& rng) {
  world::SequenceInputs in;
  for (std::size_t t = 0; t < kSteps; ++t) {
    in.observations.push_back(Tensor::randn({kBatch, kObs}, rng));
    in.actions.push_back(Tensor::uniform({kBatch, kAct}, rng, -1.0, 1.0));
    in.rewards.push_back(Tensor::randn({kBatch, 1}, rng));
  }
  return in;
}

replay::TokenSequence random_window(std::size_t k, std::size_t valid, Rng& rng) {
  std::normal_distribution<double> n;
  replay::TokenSequence s;
  s.rtg.assign(k, 0.0);
  s.observations.assign(k, std::vector<double>(kObs, 0.0));
  s.actions.assign(k, std::vector<double>(kAct, 0.0));
  s.timesteps.assign(k, 0);
  s.valid_len = valid;
  for (std::size_t i = k - valid; i < k; ++i) {
    s.rtg[i] = 2.0 * n(rng);
    for (auto& v : s.observations[i]) v = n(rng);
    for (auto& v : s.actions[i]) v = std::tanh(n(rng));
    s.timesteps[i] = i;
  }
  return s;
}

std::vector<GradCheckLine> composite_checks(std::uint64_t seed) {
  std::vector<GradCheckLine> out;
  Rng init(seed), pick(seed + 1);

  const world::WorldModel model(small_world(), init);
  jitter(model.parameters(), init);
  const auto batch = random_sequences(init);
  const std::string seq_detail = std::to_string(kSteps) + "x" + shape_text(kBatch, kObs);
  out.push_back(composite(
      "world_model_loss",
      [&] {
        Rng noise(seed + 2);
        world::WorldLosses parts;
        return model.loss(batch, noise, parts);
      },
      model.parameters(), seq_detail, pick));

  const world::ActionModel actor(model.feature_dim(), kAct, {12}, init);
  const world::ValueModel value(model.feature_dim(), {12}, init);
  world::LatentState start = model.initial_state(kBatch);
  start.deter = Tensor::randn({kBatch, small_world().deter}, init);
  start.stoch = Tensor::randn({kBatch, small_world().stoch}, init);
  const std::string start_detail = shape_text(kBatch, model.feature_dim()) + " H=2";
  {
    const auto frozen_model = model.parameters();
    const auto frozen_value = value.parameters();
    nn::FreezeGuard f1(frozen_model), f2(frozen_value);
    out.push_back(composite(
        "actor_loss",
        [&] {
          Rng noise(seed + 3);
          const auto r = world::imagine(model, actor, value, start, 2, noise);
          return world::actor_loss(r, 0.9, world::BehaviorVariant::kStandard);
        },
        actor.parameters(), start_detail, pick));
  }
  {
    const auto frozen_model = model.parameters();
    const auto frozen_actor = actor.parameters();
    nn::FreezeGuard f1(frozen_model), f2(frozen_actor);
    // The bootstrap target is a constant of the regression, so it is fixed
    // at the unperturbed parameters.
    Rng noise(seed + 4);
    const auto rollout = world::imagine(model, actor, value, start, 2, noise);
    const auto targets =
        world::value_targets(value, rollout, 0.9, world::BehaviorVariant::kStandard);
    ad::Graph::current().clear();
    out.push_back(composite(
        "value_loss",
        [&] { return world::value_regression_loss(value, rollout, targets); },
        value.parameters(), start_detail, pick));
  }

  odt::OdtConfig cfg;
  cfg.model.context = 3;
  cfg.model.layers = 2;
  cfg.model.width = 8;
  cfg.model.heads = 2;
  cfg.model.max_timestep = 16;
  cfg.entropy_coef = 0.3;
  const env::EnvSpec spec{"box", kObs, kAct, std::vector<double>(kAct, -1.0),
                          std::vector<double>(kAct, 1.0), 16};
  const odt::OdtAgent agent(spec, cfg, seed + 5);
  std::vector<replay::OdtSample> samples;
  for (std::size_t valid : {3, 2}) samples.push_back({random_window(3, valid, init), 0, 0, nullptr});
  out.push_back(composite(
      "odt_nll", [&] { return agent.loss(samples); }, agent.parameters(), "2x K=3", pick));
  return out;
}

}  // namespace

std::vector<GradCheckLine> run_gradcheck_suite(std::size_t trials, std::uint64_t seed) {
  std::vector<GradCheckLine> out;
  for (const auto& c : ad::check_all_ops(trials, seed)) {
    out.push_back({"op", std::string(ad::op_name(c.kind)), c.worst_rel_error, c.worst_shapes,
                   kOpTolerance});
  }
  for (auto& c : composite_checks(seed)) out.push_back(std::move(c));
  return out;
}

bool report_gradcheck(std::ostream& out, const std::vector<GradCheckLine>& lines) {
  std::size_t failed = 0;
  char buf[256];
  for (const auto& l : lines) {
    std::snprintf(buf, sizeof buf, "%-9s %-18s worst_rel_err=%.3e tol=%.0e %s shapes=%s\n",
                  l.category.c_str(), l.name.c_str(), l.worst_rel_error, l.tolerance,
                  l.passed() ? "ok  " : "FAIL", l.detail.c_str());
    out << buf;
    if (!l.passed()) ++failed;
  }
  out << (failed == 0 ? "gradcheck: all " + std::to_string(lines.size()) + " checks passed\n"
                      : "gradcheck: " + std::to_string(failed) + " of " +
                            std::to_string(lines.size()) + " checks failed\n");
  return failed == 0;
}

}  // namespace dodt::cli
