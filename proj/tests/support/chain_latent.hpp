#pragma once

#include <cmath>
#include <vector>

#include "dodt/autodiff/ops.hpp"
#include "dodt/world/behavior.hpp"
#include "dodt/world/world_model.hpp"

// Exact latent model of the five-state chain. Latent features are one-hot over
// seven slots: chain states 0..4, "paid" (the step that earns reward 1 from
// state 4) and "absorbed". A normalized action a in (-1, 1) moves right with
// probability (a + 1) / 2; transitions return the expected next one-hot, so
// the model is differentiable in the action and linear values are exact in
// expectation.
namespace dodt::testing {

using ad::Tensor;

inline constexpr std::size_t kChainSlots = 7;
inline constexpr std::size_t kPaid = 5;
inline constexpr std::size_t kAbsorbed = 6;

inline Tensor one_hot_rows(const std::vector<std::size_t>& slots) {
  std::vector<double> v(slots.size() * kChainSlots, 0.0);
  for (std::size_t i = 0; i < slots.size(); ++i) v[i * kChainSlots + slots[i]] = 1.0;
  return Tensor({slots.size(), kChainSlots}, std::move(v));
}

// Slot reached from each slot when moving right (left when `right` is false).
inline std::size_t chain_next(std::size_t slot, bool right) {
  if (slot == 4) return kPaid;
  if (slot == kPaid || slot == kAbsorbed) return kAbsorbed;
  if (right) return slot + 1;
  return slot == 0 ? 0 : slot - 1;
}

inline Tensor transition_matrix(bool right) {
  std::vector<double> m(kChainSlots * kChainSlots, 0.0);
  for (std::size_t s = 0; s < kChainSlots; ++s) m[s * kChainSlots + chain_next(s, right)] = 1.0;
  return Tensor({kChainSlots, kChainSlots}, std::move(m));
}

// V(slot) under always-right: gamma^(4 - i) for chain states, 0 afterwards.
inline std::vector<double> chain_values(double gamma) {
  std::vector<double> v(kChainSlots, 0.0);
  for (std::size_t i = 0; i < 5; ++i) v[i] = std::pow(gamma, 4.0 - static_cast<double>(i));
  return v;
}

class ChainLatentModel final : public world::LatentModel {
 public:
  ChainLatentModel() : right_(transition_matrix(true)), left_(transition_matrix(false)) {
    std::vector<double> r(kChainSlots, 0.0);
    r[kPaid] = 1.0;
    reward_ = Tensor({kChainSlots, 1}, std::move(r));
  }

  world::LatentState transition(const world::LatentState& s, const Tensor& action,
                                ad::Rng&) const override {
    using namespace ad;
    const Tensor p_right = 0.5 * add_scalar(action, 1.0);  // [B, 1]
    const Tensor spread = Tensor::full({1, kChainSlots}, 1.0);
    const Tensor pr = matmul(p_right, spread);
    const Tensor pl = matmul(add_scalar(-p_right, 1.0), spread);
    world::LatentState next;
    next.deter = pr * matmul(s.deter, right_) + pl * matmul(s.deter, left_);
    return next;
  }

  Tensor reward(const world::LatentState& s) const override {
    return ad::matmul(s.deter, reward_);
  }

  std::size_t feature_dim() const override { return kChainSlots; }
  nn::ParamList parameters() const override { return {}; }

 private:
  Tensor right_, left_, reward_;
};

// H-step rollout from every slot under always-right, with exact rewards.
inline world::ImaginedRollout always_right_rollout(std::size_t horizon) {
  world::ImaginedRollout r;
  std::vector<std::size_t> slots(kChainSlots);
  for (std::size_t s = 0; s < kChainSlots; ++s) slots[s] = s;
  r.states.push_back({one_hot_rows(slots), {}, {}, {}});
  for (std::size_t h = 0; h < horizon; ++h) {
    std::vector<double> rew(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
      slots[i] = chain_next(slots[i], true);
      rew[i] = slots[i] == kPaid ? 1.0 : 0.0;
    }
    r.states.push_back({one_hot_rows(slots), {}, {}, {}});
    r.rewards.push_back(Tensor({slots.size(), 1}, std::move(rew)));
    r.actions.push_back(Tensor::full({slots.size(), 1}, 1.0));
  }
  return r;
}

}  // namespace dodt::testing
