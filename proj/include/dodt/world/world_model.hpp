#pragma once

#include <cstdint>
#include <vector>

#include "dodt/autodiff/adam.hpp"
#include "dodt/nn/layers.hpp"

namespace dodt::world {

using ad::Rng;
using ad::Tensor;

// Diagonal Gaussian over the stochastic latent, batch-major [B, Z].
struct Gaussian {
  Tensor mean;
  Tensor std;
};

// Latent state of a batch: deter [B, D] from the recurrent cell, stoch [B, Z]
// sampled from stoch_mean/stoch_std. stoch may be undefined for models whose
// state is purely deterministic.
struct LatentState {
  Tensor deter;
  Tensor stoch;
  Tensor stoch_mean;
  Tensor stoch_std;

  std::size_t batch() const { return deter.dim(0); }
  // [B, D + Z], the input of every head that reads the full state.
  Tensor features() const;
  LatentState detach() const;
};

// Sum over latent dims of KL(q || p), shape [B].
Tensor gaussian_kl(const Gaussian& q, const Gaussian& p);

// Transition and reward model used by latent imagination.
class LatentModel {
 public:
  virtual ~LatentModel() = default;
  // Next state given the current one and a normalized action [B, A].
  virtual LatentState transition(const LatentState& state, const Tensor& action,
                                 Rng& rng) const = 0;
  // Predicted reward of arriving in `state`, shape [B, 1].
  virtual Tensor reward(const LatentState& state) const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual nn::ParamList parameters() const = 0;
};

struct WorldModelConfig {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::size_t deter = 64;
  std::size_t stoch = 16;
  std::size_t hidden = 64;
  std::size_t embed = 64;
  double min_std = 0.1;
  double free_nats = 1.0;
};

struct StepOutput {
  LatentState state;
  Gaussian prior;
  Gaussian posterior;  // undefined for prior_step
};

// Per-sequence inputs, time-major: obs[t] [B, O], actions[t] [B, A]
// (normalized to [-1, 1]), rewards[t] [B, 1]. actions[t] is taken at obs[t]
// and earns rewards[t].
struct SequenceInputs {
  std::vector<Tensor> observations;
  std::vector<Tensor> actions;
  std::vector<Tensor> rewards;

  std::size_t length() const { return observations.size(); }
};

struct WorldLosses {
  double reconstruction = 0.0;  // mean Gaussian NLL per observation
  double reward = 0.0;          // mean Gaussian NLL per reward
  double kl = 0.0;              // mean KL(posterior || prior), before free nats
  double total = 0.0;
  bool skipped = false;
};

// Recurrent state-space model:
//   h_t = GRU(relu(W [z_{t-1}, a_{t-1}]), h_{t-1})
//   prior     p(z_t | h_t)        = N(mu, softplus(raw) + min_std)
//   posterior q(z_t | h_t, e(o_t)) likewise
//   decoder   N(o_t; f([h_t, z_t]), I),  reward N(r; g([h_t, z_t]), 1)
class WorldModel final : public LatentModel {
 public:
  WorldModel(const WorldModelConfig& config, Rng& rng);

  const WorldModelConfig& config() const { return config_; }

  LatentState initial_state(std::size_t batch) const;

  StepOutput posterior_step(const LatentState& prev, const Tensor& prev_action,
                            const Tensor& observation, Rng& rng) const;
  StepOutput prior_step(const LatentState& prev, const Tensor& prev_action,
                        Rng& rng) const;

  LatentState transition(const LatentState& state, const Tensor& action,
                         Rng& rng) const override;
  Tensor reward(const LatentState& state) const override;
  Tensor decode(const LatentState& state) const;
  std::size_t feature_dim() const override { return config_.deter + config_.stoch; }

  // Reconstruction + reward NLL + max(KL, free_nats), as a scalar tensor with
  // graph attached. The reward head at state t+1 is scored on rewards[t].
  // When `posteriors` is given it receives the detached posterior states of
  // every step, concatenated over time into one batch [L * B, .].
  Tensor loss(const SequenceInputs& batch, Rng& rng, WorldLosses& parts,
              LatentState* posteriors = nullptr) const;

  nn::ParamList parameters() const override;

 private:
  Tensor deter_step(const LatentState& prev, const Tensor& prev_action) const;
  Gaussian head(const nn::Mlp& mlp, const Tensor& input) const;
  LatentState sample(const Tensor& deter, const Gaussian& dist, Rng& rng) const;

  WorldModelConfig config_;
  nn::Mlp encoder_;
  nn::Linear input_;
  nn::GruCell cell_;
  nn::Mlp prior_;
  nn::Mlp posterior_;
  nn::Mlp decoder_;
  nn::Mlp reward_;
};

// One optimizer step on the world model. Non-finite losses skip the update,
// zero gradients, and set `skipped`.
WorldLosses dynamics_learning_step(const WorldModel& model, ad::Adam& optimizer,
                                   const SequenceInputs& batch, Rng& rng,
                                   LatentState* posteriors = nullptr);

// Throws std::invalid_argument naming `what` if any value is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

}  // namespace dodt::world
