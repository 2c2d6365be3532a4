#pragma once

#include <span>
#include <vector>

#include "dodt/autodiff/adam.hpp"
#include "dodt/nn/layers.hpp"
#include "dodt/world/world_model.hpp"

namespace dodt::world {

// Tanh-squashed diagonal Gaussian policy over normalized actions in (-1, 1).
// The network emits [mu, raw]; the pre-squash std is softplus(raw) + min_std.
class ActionModel {
 public:
  ActionModel(std::size_t feature_dim, std::size_t act_dim,
              const std::vector<std::size_t>& hidden, Rng& rng, double min_std = 1e-4);

  Gaussian distribution(const Tensor& features) const;
  // tanh(mu + std * eps), differentiable in the parameters.
  Tensor sample(const Tensor& features, Rng& rng) const;
  Tensor mode(const Tensor& features) const;

  std::size_t act_dim() const { return act_dim_; }
  nn::ParamList parameters() const;

 private:
  nn::Mlp net_;
  std::size_t act_dim_;
  double min_std_;
};

class ValueModel {
 public:
  // Empty `hidden` gives a linear value function.
  ValueModel(std::size_t feature_dim, const std::vector<std::size_t>& hidden, Rng& rng);

  Tensor operator()(const Tensor& features) const;  // [B, 1]
  nn::ParamList parameters() const;

 private:
  nn::Mlp net_;
};

// states and values have H + 1 entries, actions and rewards H. rewards[r] is
// the predicted reward of moving from states[r] to states[r + 1].
struct ImaginedRollout {
  std::vector<LatentState> states;
  std::vector<Tensor> actions;
  std::vector<Tensor> rewards;
  std::vector<Tensor> values;

  std::size_t horizon() const { return actions.size(); }
};

// kStandard: actor maximizes sum_r gamma^r v(s_r); value target is
//            gamma * v(s_{r+1}) + r_r.
// kLiteral:  actor maximizes sum_r v(s_r); value target is v(s_{r+1}) + gamma * r_r.
enum class BehaviorVariant { kStandard, kLiteral };

// Rolls the actor through the latent model for `horizon` steps without any
// environment interaction. Gradients flow to every parameter that requires
// them; wrap the call (and the following backward) in nn::FreezeGuard to
// hold the model or value parameters fixed.
ImaginedRollout imagine(const LatentModel& model, const ActionModel& actor,
                        const ValueModel& value, const LatentState& start, int horizon,
                        Rng& rng);

// Per-sample objective sum_r w_r v(s_r), averaged over the batch, with
// w_r = gamma^r (kStandard) or 1 (kLiteral). Plain double, no graph.
double actor_objective(const ImaginedRollout& rollout, double gamma, BehaviorVariant variant);

// Negated objective as a graph node: mean_b -sum_r w_r v(s_r).
Tensor actor_loss(const ImaginedRollout& rollout, double gamma, BehaviorVariant variant);

// One ascent step on the objective above for the actor parameters only.
// Returns the loss (negated objective). Non-finite losses skip the step.
double actor_update(const ActionModel& actor, ad::Adam& optimizer,
                    const ImaginedRollout& rollout, double gamma, BehaviorVariant variant);

// mean_b 1/2 sum_r (target_r - v(s_r))^2 with the bootstrap target computed
// from detached states and held constant.
Tensor value_loss(const ValueModel& value, const ImaginedRollout& rollout, double gamma,
                  BehaviorVariant variant);

// The bootstrap targets alone, computed without a graph.
std::vector<Tensor> value_targets(const ValueModel& value, const ImaginedRollout& rollout,
                                  double gamma, BehaviorVariant variant);
// mean_b 1/2 sum_r (targets[r] - v(s_r))^2 for given targets.
Tensor value_regression_loss(const ValueModel& value, const ImaginedRollout& rollout,
                             std::span<const Tensor> targets);

// One descent step on value_loss. Its backward() clears the thread's graph,
// so call it after actor_update.
double value_update(const ValueModel& value, ad::Adam& optimizer,
                    const ImaginedRollout& rollout, double gamma, BehaviorVariant variant);

}  // namespace dodt::world
