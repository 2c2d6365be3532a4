#include "dodt/world/world_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

#include "dodt/autodiff/ops.hpp"

namespace dodt::world {

using namespace ad;

void require_finite(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": non-finite input");
    }
  }
}

Tensor LatentState::features() const {
  if (!stoch.defined()) return deter;
  const Tensor parts[] = {deter, stoch};
  return concat(parts, 1);
}

LatentState LatentState::detach() const {
  LatentState s;
  s.deter = deter.detach();
  if (stoch.defined()) s.stoch = stoch.detach();
  if (stoch_mean.defined()) s.stoch_mean = stoch_mean.detach();
  if (stoch_std.defined()) s.stoch_std = stoch_std.detach();
  return s;
}

Tensor gaussian_kl(const Gaussian& q, const Gaussian& p) {
  const Tensor log_q = log(q.std);
  const Tensor log_p = log(p.std);
  const Tensor var_ratio = exp(2.0 * (log_q - log_p));
  const Tensor z = (q.mean - p.mean) * exp(-log_p);
  const Tensor per_dim = add_scalar(log_p - log_q + 0.5 * (var_ratio + z * z), -0.5);
  return sum_lastdim(per_dim);
}

WorldModel::WorldModel(const WorldModelConfig& c, Rng& rng) : config_(c) {
  if (c.obs_dim == 0 || c.act_dim == 0 || c.deter == 0 || c.stoch == 0 ||
      c.hidden == 0 || c.embed == 0 || !(c.min_std > 0.0) || c.free_nats < 0.0) {
    throw std::invalid_argument("WorldModel: invalid configuration");
  }
  const auto act = nn::Activation::kRelu;
  encoder_ = nn::Mlp(c.obs_dim, {c.hidden}, c.embed, act, rng, "wm.encoder");
  input_ = nn::Linear(c.stoch + c.act_dim, c.hidden, rng, "wm.input");
  cell_ = nn::GruCell(c.hidden, c.deter, rng, "wm.gru");
  prior_ = nn::Mlp(c.deter, {c.hidden}, 2 * c.stoch, act, rng, "wm.prior");
  posterior_ = nn::Mlp(c.deter + c.embed, {c.hidden}, 2 * c.stoch, act, rng, "wm.posterior");
  decoder_ = nn::Mlp(c.deter + c.stoch, {c.hidden, c.hidden}, c.obs_dim, act, rng, "wm.decoder");
  reward_ = nn::Mlp(c.deter + c.stoch, {c.hidden, c.hidden}, 1, act, rng, "wm.reward");
}

nn::ParamList WorldModel::parameters() const {
  nn::ParamList out;
  encoder_.collect(out);
  input_.collect(out);
  cell_.collect(out);
  prior_.collect(out);
  posterior_.collect(out);
  decoder_.collect(out);
  reward_.collect(out);
  return out;
}

LatentState WorldModel::initial_state(std::size_t batch) const {
  LatentState s;
  s.deter = Tensor::zeros({batch, config_.deter});
  s.stoch = Tensor::zeros({batch, config_.stoch});
  s.stoch_mean = Tensor::zeros({batch, config_.stoch});
  s.stoch_std = Tensor::full({batch, config_.stoch}, 1.0);
  return s;
}

Tensor WorldModel::deter_step(const LatentState& prev, const Tensor& prev_action) const {
  require_finite(prev_action, "world model action");
  if (prev_action.rank() != 2 || prev_action.dim(1) != config_.act_dim ||
      prev_action.dim(0) != prev.batch()) {
    throw std::invalid_argument("world model: action shape " + to_string(prev_action.shape()) +
                                " does not match batch " + std::to_string(prev.batch()) +
                                " x act_dim " + std::to_string(config_.act_dim));
  }
  const Tensor parts[] = {prev.stoch, prev_action};
  const Tensor x = relu(input_(concat(parts, 1)));
  return cell_(x, prev.deter);
}

Gaussian WorldModel::head(const nn::Mlp& mlp, const Tensor& input) const {
  const Tensor raw = mlp(input);
  const std::size_t z = config_.stoch;
  return {slice(raw, 1, 0, z), add_scalar(softplus(slice(raw, 1, z, z)), config_.min_std)};
}

LatentState WorldModel::sample(const Tensor& deter, const Gaussian& dist, Rng& rng) const {
  const Tensor eps = Tensor::randn(dist.mean.shape(), rng);
  return {deter, dist.mean + dist.std * eps, dist.mean, dist.std};
}

StepOutput WorldModel::posterior_step(const LatentState& prev, const Tensor& prev_action,
                                      const Tensor& observation, Rng& rng) const {
  require_finite(observation, "world model observation");
  if (observation.rank() != 2 || observation.dim(1) != config_.obs_dim ||
      observation.dim(0) != prev.batch()) {
    throw std::invalid_argument("world model: observation shape " +
                                to_string(observation.shape()) + " does not match batch x obs_dim " +
                                std::to_string(config_.obs_dim));
  }
  const Tensor deter = deter_step(prev, prev_action);
  StepOutput out;
  out.prior = head(prior_, deter);
  const Tensor parts[] = {deter, encoder_(observation)};
  out.posterior = head(posterior_, concat(parts, 1));
  out.state = sample(deter, out.posterior, rng);
  return out;
}

StepOutput WorldModel::prior_step(const LatentState& prev, const Tensor& prev_action,
                                  Rng& rng) const {
  const Tensor deter = deter_step(prev, prev_action);
  StepOutput out;
  out.prior = head(prior_, deter);
  out.state = sample(deter, out.prior, rng);
  return out;
}

LatentState WorldModel::transition(const LatentState& state, const Tensor& action,
                                   Rng& rng) const {
  return prior_step(state, action, rng).state;
}

Tensor WorldModel::reward(const LatentState& state) const { return reward_(state.features()); }

Tensor WorldModel::decode(const LatentState& state) const { return decoder_(state.features()); }

namespace {

// Mean over the batch of the unit-variance Gaussian NLL of `target`.
Tensor unit_gaussian_nll(const Tensor& prediction, const Tensor& target) {
  const Tensor diff = prediction - target;
  const double dims = static_cast<double>(target.dim(1));
  return add_scalar(0.5 * mean(sum_lastdim(diff * diff)),
                    0.5 * dims * std::log(2.0 * std::numbers::pi));
}

}  // namespace

Tensor WorldModel::loss(const SequenceInputs& batch, Rng& rng, WorldLosses& parts,
                        LatentState* posteriors) const {
  const std::size_t steps = batch.length();
  if (steps < 2 || batch.actions.size() != steps || batch.rewards.size() != steps) {
    throw std::invalid_argument("world model loss: need at least 2 aligned steps");
  }
  const std::size_t b = batch.observations.front().dim(0);
  LatentState state = initial_state(b);
  Tensor prev_action = Tensor::zeros({b, config_.act_dim});
  std::vector<Tensor> recon, rew, kls, deters, stochs, means, stds;
  for (std::size_t t = 0; t < steps; ++t) {
    StepOutput out = posterior_step(state, prev_action, batch.observations[t], rng);
    state = out.state;
    recon.push_back(unit_gaussian_nll(decode(state), batch.observations[t]));
    if (t > 0) rew.push_back(unit_gaussian_nll(reward(state), batch.rewards[t - 1]));
    kls.push_back(mean(gaussian_kl(out.posterior, out.prior)));
    if (posteriors) {
      deters.push_back(state.deter.detach());
      stochs.push_back(state.stoch.detach());
      means.push_back(state.stoch_mean.detach());
      stds.push_back(state.stoch_std.detach());
    }
    prev_action = batch.actions[t];
  }
  const Tensor recon_mean = mean(concat(recon, 0));
  const Tensor reward_mean = mean(concat(rew, 0));
  const Tensor kl_mean = mean(concat(kls, 0));
  const Tensor total = recon_mean + reward_mean + clamp_min(kl_mean, config_.free_nats);
  parts.reconstruction = recon_mean.item();
  parts.reward = reward_mean.item();
  parts.kl = kl_mean.item();
  parts.total = total.item();
  parts.skipped = false;
  if (posteriors) {
    posteriors->deter = concat(deters, 0);
    posteriors->stoch = concat(stochs, 0);
    posteriors->stoch_mean = concat(means, 0);
    posteriors->stoch_std = concat(stds, 0);
  }
  return total;
}

WorldLosses dynamics_learning_step(const WorldModel& model, ad::Adam& optimizer,
                                   const SequenceInputs& batch, Rng& rng,
                                   LatentState* posteriors) {
  WorldLosses parts;
  optimizer.zero_grad();
  const Tensor total = model.loss(batch, rng, parts, posteriors);
  if (!std::isfinite(parts.total)) {
    Graph::current().clear();
    parts.skipped = true;
    spdlog::warn("dynamics_learning_step: non-finite loss, update skipped");
    return parts;
  }
  backward(total);
  optimizer.step();
  return parts;
}

}  // namespace dodt::world
