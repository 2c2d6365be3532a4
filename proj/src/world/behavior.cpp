#include "dodt/world/behavior.hpp"

#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "dodt/autodiff/ops.hpp"

namespace dodt::world {

using namespace ad;

ActionModel::ActionModel(std::size_t feature_dim, std::size_t act_dim,
                         const std::vector<std::size_t>& hidden, Rng& rng, double min_std)
    : net_(feature_dim, hidden, 2 * act_dim, nn::Activation::kRelu, rng, "actor"),
      act_dim_(act_dim),
      min_std_(min_std) {}

Gaussian ActionModel::distribution(const Tensor& features) const {
  const Tensor raw = net_(features);
  return {slice(raw, 1, 0, act_dim_), add_scalar(softplus(slice(raw, 1, act_dim_, act_dim_)), min_std_)};
}

Tensor ActionModel::sample(const Tensor& features, Rng& rng) const {
  const Gaussian d = distribution(features);
  const Tensor eps = Tensor::randn(d.mean.shape(), rng);
  return tanh(d.mean + d.std * eps);
}

Tensor ActionModel::mode(const Tensor& features) const {
  return tanh(slice(net_(features), 1, 0, act_dim_));
}

nn::ParamList ActionModel::parameters() const {
  nn::ParamList out;
  net_.collect(out);
  return out;
}

ValueModel::ValueModel(std::size_t feature_dim, const std::vector<std::size_t>& hidden, Rng& rng)
    : net_(feature_dim, hidden, 1, nn::Activation::kRelu, rng, "value") {}

Tensor ValueModel::operator()(const Tensor& features) const { return net_(features); }

nn::ParamList ValueModel::parameters() const {
  nn::ParamList out;
  net_.collect(out);
  return out;
}

ImaginedRollout imagine(const LatentModel& model, const ActionModel& actor,
                        const ValueModel& value, const LatentState& start, int horizon,
                        Rng& rng) {
  if (horizon <= 0) {
    throw std::invalid_argument("imagine: horizon must be positive, got " +
                                std::to_string(horizon));
  }
  require_finite(start.deter, "imagine start state");
  if (start.stoch.defined()) require_finite(start.stoch, "imagine start state");
  ImaginedRollout out;
  out.states.push_back(start);
  for (int r = 0; r < horizon; ++r) {
    const LatentState& s = out.states.back();
    const Tensor a = actor.sample(s.features(), rng);
    LatentState next = model.transition(s, a, rng);
    out.rewards.push_back(model.reward(next));
    out.actions.push_back(a);
    out.states.push_back(std::move(next));
  }
  for (const auto& s : out.states) out.values.push_back(value(s.features()));
  return out;
}

namespace {

double weight(std::size_t r, double gamma, BehaviorVariant variant) {
  return variant == BehaviorVariant::kStandard ? std::pow(gamma, static_cast<double>(r)) : 1.0;
}

}  // namespace

double actor_objective(const ImaginedRollout& rollout, double gamma, BehaviorVariant variant) {
  const std::size_t batch = rollout.values.front().dim(0);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rollout.values.size(); ++r) {
      acc += weight(r, gamma, variant) * rollout.values[r].values()[b];
    }
    total += acc;
  }
  return total / static_cast<double>(batch);
}

Tensor actor_loss(const ImaginedRollout& rollout, double gamma, BehaviorVariant variant) {
  std::vector<Tensor> terms;
  for (std::size_t r = 0; r < rollout.values.size(); ++r) {
    terms.push_back(scale(rollout.values[r], -weight(r, gamma, variant)));
  }
  // Per-sample sums, then the batch mean.
  return mean(sum_lastdim(concat(terms, 1)));
}

double actor_update(const ActionModel& actor, Adam& optimizer, const ImaginedRollout& rollout,
                    double gamma, BehaviorVariant variant) {
  optimizer.zero_grad();
  const Tensor loss = actor_loss(rollout, gamma, variant);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    Graph::current().clear();
    spdlog::warn("actor_update: non-finite loss, update skipped");
    return value;
  }
  if (loss.requires_grad()) {
    backward(loss);
  } else {
    Graph::current().clear();
  }
  // Parameters the loss does not reach take a zero-gradient step.
  for (const auto& p : actor.parameters()) p.tensor.impl()->ensure_grad();
  optimizer.step();
  return value;
}

std::vector<Tensor> value_targets(const ValueModel& value, const ImaginedRollout& rollout,
                                  double gamma, BehaviorVariant variant) {
  const std::size_t h = rollout.horizon();
  if (h == 0 || rollout.states.size() != h + 1 || rollout.rewards.size() != h) {
    throw std::invalid_argument("value_loss: malformed rollout");
  }
  NoGradGuard no_grad;
  std::vector<Tensor> targets;
  for (std::size_t r = 0; r < h; ++r) {
    const Tensor next_v = value(rollout.states[r + 1].features().detach());
    const Tensor rew = rollout.rewards[r].detach();
    targets.push_back(variant == BehaviorVariant::kStandard ? gamma * next_v + rew
                                                            : next_v + gamma * rew);
  }
  return targets;
}

Tensor value_regression_loss(const ValueModel& value, const ImaginedRollout& rollout,
                             std::span<const Tensor> targets) {
  const std::size_t h = rollout.horizon();
  if (h == 0 || targets.size() != h || rollout.states.size() != h + 1) {
    throw std::invalid_argument("value_loss: malformed rollout or targets");
  }
  std::vector<Tensor> errors;
  for (std::size_t r = 0; r < h; ++r) {
    Tensor feat;
    {
      NoGradGuard no_grad;
      feat = rollout.states[r].features().detach();
    }
    const Tensor diff = targets[r] - value(feat);
    errors.push_back(diff * diff);
  }
  return 0.5 * mean(sum_lastdim(concat(errors, 1)));
}

Tensor value_loss(const ValueModel& value, const ImaginedRollout& rollout, double gamma,
                  BehaviorVariant variant) {
  const auto targets = value_targets(value, rollout, gamma, variant);
  return value_regression_loss(value, rollout, targets);
}

double value_update(const ValueModel& value, Adam& optimizer, const ImaginedRollout& rollout,
                    double gamma, BehaviorVariant variant) {
  optimizer.zero_grad();
  const Tensor loss = value_loss(value, rollout, gamma, variant);
  const double result = loss.item();
  if (!std::isfinite(result)) {
    Graph::current().clear();
    spdlog::warn("value_update: non-finite loss, update skipped");
    return result;
  }
  backward(loss);
  optimizer.step();
  return result;
}

}  // namespace dodt::world
