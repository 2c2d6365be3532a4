#include "dodt/odt/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "dodt/autodiff/ops.hpp"

namespace dodt::odt {

using namespace ad;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

OdtAgent::OdtAgent(const env::EnvSpec& spec, OdtConfig config, std::uint64_t seed)
    : spec_(spec), config_(std::move(config)), rng_(seed) {
  if (config_.batch == 0 || config_.entropy_coef < 0.0 || !std::isfinite(config_.online_rtg) ||
      !std::isfinite(config_.eval_rtg) || !(config_.rtg_gamma > 0.0 && config_.rtg_gamma <= 1.0)) {
    throw std::invalid_argument("OdtAgent: invalid hyperparameters");
  }
  config_.model.obs_dim = spec_.obs_dim;
  config_.model.act_dim = spec_.act_dim;
  model_ = std::make_unique<DecisionTransformer>(config_.model, rng_);
  optimizer_ = std::make_unique<Adam>(nn::tensors(model_->parameters()), config_.optim);
}

replay::TokenSequence OdtAgent::normalized(const replay::TokenSequence& seq) const {
  replay::TokenSequence out = seq;
  for (std::size_t i = seq.pad(); i < seq.context(); ++i) {
    out.actions[i] = spec_.normalize_action(seq.actions[i]);
  }
  return out;
}

Tensor OdtAgent::loss(std::span<const replay::OdtSample> samples, OdtLosses* parts) const {
  if (samples.empty()) throw std::invalid_argument("OdtAgent::loss: empty batch");
  std::vector<replay::TokenSequence> seqs;
  seqs.reserve(samples.size());
  for (const auto& s : samples) seqs.push_back(normalized(s.sequence));
  const ActionDistribution d = model_->forward(seqs);

  const std::size_t k = seqs.front().context();
  const std::size_t adim = spec_.act_dim;
  const std::size_t n = seqs.size() * k;
  std::vector<double> target(n * adim, 0.0), weight(n, 0.0);
  double valid = 0.0;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t i = seqs[b].pad(); i < k; ++i) {
      const std::size_t row = b * k + i;
      std::copy(seqs[b].actions[i].begin(), seqs[b].actions[i].end(),
                target.begin() + static_cast<std::ptrdiff_t>(row * adim));
      weight[row] = 1.0;
      valid += 1.0;
    }
  }
  const Tensor w({n}, std::move(weight));
  const Tensor z = (Tensor({n, adim}, std::move(target)) - d.mean) * exp(-d.log_std);
  const double dims = static_cast<double>(adim);
  const Tensor nll_pos =
      add_scalar(sum_lastdim(0.5 * (z * z) + d.log_std), dims * kHalfLog2Pi);
  const Tensor ent_pos = add_scalar(sum_lastdim(d.log_std), dims * (0.5 + kHalfLog2Pi));
  const Tensor nll = sum(nll_pos * w) * (1.0 / valid);
  const Tensor entropy = sum(ent_pos * w) * (1.0 / valid);
  const Tensor total = nll - entropy * config_.entropy_coef;
  if (parts != nullptr) {
    parts->nll = nll.item();
    parts->entropy = entropy.item();
    parts->total = total.item();
  }
  return total;
}

OdtLosses OdtAgent::training_step(std::span<const replay::OdtSample> samples) {
  OdtLosses parts;
  optimizer_->zero_grad();
  const Tensor total = loss(samples, &parts);
  if (!std::isfinite(parts.total)) {
    Graph::current().clear();
    parts.skipped = true;
    spdlog::warn("odt training_step: non-finite loss, update skipped");
    return parts;
  }
  backward(total);
  // Embeddings the loss cannot reach (e.g. actions when K = 1) take a zero step.
  for (const auto& p : model_->parameters()) p.tensor.impl()->ensure_grad();
  optimizer_->step();
  return parts;
}

OdtUpdate OdtAgent::training_step(const replay::TrajectoryBuffer& buffer,
                                  std::uint64_t sample_seed) {
  const auto samples = replay::sample_subsequences_for_odt(
      buffer, config_.batch, config_.model.context, config_.rtg_gamma, sample_seed);
  OdtUpdate out;
  out.losses = training_step(samples);
  out.sampled.reserve(samples.size());
  for (const auto& s : samples) out.sampled.push_back(s.trajectory);
  return out;
}

OnlineRollout OdtAgent::rollout_online(env::Environment& env, std::uint64_t env_seed,
                                       double g_init, RolloutMode mode, std::size_t max_steps) {
  NoGradGuard no_grad;
  const std::size_t k = config_.model.context;
  const std::size_t adim = spec_.act_dim;
  std::vector<std::vector<double>> obs{env.reset(env_seed)};
  std::vector<std::vector<double>> units;  // normalized actions taken
  std::vector<std::vector<double>> acts;
  std::vector<double> rews;
  OnlineRollout out;
  out.rtg.push_back(g_init);
  for (;;) {
    const std::size_t t = rews.size();
    const std::size_t count = std::min(k, t + 1);
    const std::size_t first = t + 1 - count;
    replay::TokenSequence seq;
    seq.rtg.assign(k, 0.0);
    seq.observations.assign(k, std::vector<double>(spec_.obs_dim, 0.0));
    seq.actions.assign(k, std::vector<double>(adim, 0.0));
    seq.timesteps.assign(k, 0);
    seq.valid_len = count;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = first + i, dst = k - count + i;
      seq.rtg[dst] = out.rtg[src];
      seq.observations[dst] = obs[src];
      if (src < t) seq.actions[dst] = units[src];
      seq.timesteps[dst] = src;
    }
    const ActionDistribution d = model_->predict_last(seq);
    std::vector<double> unit(d.mean.values().begin(), d.mean.values().end());
    if (mode == RolloutMode::kExplore) {
      std::normal_distribution<double> normal;
      for (std::size_t j = 0; j < adim; ++j) {
        unit[j] = std::clamp(unit[j] + std::exp(d.log_std.values()[j]) * normal(rng_), -1.0, 1.0);
      }
    }
    auto action = spec_.denormalize_action(unit);
    for (std::size_t j = 0; j < adim; ++j) {
      action[j] = std::clamp(action[j], spec_.act_low[j], spec_.act_high[j]);
    }
    const env::StepResult r = env.step(action);
    units.push_back(spec_.normalize_action(action));
    acts.push_back(std::move(action));
    obs.push_back(r.observation);
    rews.push_back(r.reward);
    out.rtg.push_back(out.rtg.back() - r.reward);
    if (r.done() || (max_steps > 0 && rews.size() >= max_steps)) break;
  }
  out.trajectory = replay::Trajectory::make(std::move(obs), std::move(acts), std::move(rews),
                                            replay::Source::kOdt);
  return out;
}

EvalResult OdtAgent::evaluate(env::Environment& env, double rtg, std::size_t episodes,
                              std::uint64_t seed) {
  if (episodes == 0) throw std::invalid_argument("evaluate: episodes must be >= 1");
  EvalResult out;
  for (std::size_t i = 0; i < episodes; ++i) {
    out.returns.push_back(
        rollout_online(env, env::derive_seed(seed, i), rtg, RolloutMode::kEval)
            .trajectory.total_return);
  }
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean = sum / static_cast<double>(episodes);
  double var = 0.0;
  for (double r : out.returns) var += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(var / static_cast<double>(episodes));
  return out;
}

}  // namespace dodt::odt
