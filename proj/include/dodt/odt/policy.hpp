#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dodt/autodiff/adam.hpp"
#include "dodt/env/environment.hpp"
#include "dodt/odt/transformer.hpp"
#include "dodt/replay/buffer.hpp"

namespace dodt::odt {

struct OdtConfig {
  TransformerConfig model;  // obs_dim / act_dim are filled from the env spec
  double online_rtg = 0.0;  // T_online, initial RTG of exploration rollouts
  double eval_rtg = 0.0;
  std::size_t iterations = 20;  // I, gradient steps per round
  double entropy_coef = 0.0;
  std::size_t batch = 16;
  double rtg_gamma = 1.0;  // discount when relabeling sampled windows
  ad::AdamConfig optim{1e-4, 0.9, 0.999, 1e-8, false, 0.25};
};

enum class RolloutMode { kExplore, kEval };

struct OdtLosses {
  double nll = 0.0;      // mean over valid positions
  double entropy = 0.0;  // mean over valid positions
  double total = 0.0;    // nll - entropy_coef * entropy
  bool skipped = false;
};

struct OdtUpdate {
  OdtLosses losses;
  // Buffer entries behind the minibatch, one per sampled window.
  std::vector<replay::TrajectoryPtr> sampled;
};

struct OnlineRollout {
  replay::Trajectory trajectory;
  std::vector<double> rtg;  // conditioning value at each step, plus the final one
};

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> returns;
};

// Online decision transformer policy: the transformer, its optimizer and the
// exploration RNG. Actions are modeled in normalized units; trajectories
// carry env units.
class OdtAgent {
 public:
  OdtAgent(const env::EnvSpec& spec, OdtConfig config, std::uint64_t seed);

  const OdtConfig& config() const { return config_; }
  const env::EnvSpec& spec() const { return spec_; }
  const DecisionTransformer& model() const { return *model_; }
  nn::ParamList parameters() const { return model_->parameters(); }

  // Graph-building loss over the windows; fills `parts` with plain values.
  Tensor loss(std::span<const replay::OdtSample> samples, OdtLosses* parts = nullptr) const;

  // One optimizer step on the masked NLL minus the entropy bonus. Non-finite
  // losses skip the step.
  OdtLosses training_step(std::span<const replay::OdtSample> samples);
  // Samples a minibatch of config().batch windows from `buffer`, then steps.
  OdtUpdate training_step(const replay::TrajectoryBuffer& buffer, std::uint64_t sample_seed);

  // Resets `env` with `env_seed` and runs one episode conditioned on g_init,
  // updating g_{t+1} = g_t - r_t. Explore samples the Gaussian (clipped to
  // the action box); eval takes the mean.
  OnlineRollout rollout_online(env::Environment& env, std::uint64_t env_seed, double g_init,
                               RolloutMode mode, std::size_t max_steps = 0);

  // `episodes` eval rollouts on seeds derive_seed(seed, i).
  EvalResult evaluate(env::Environment& env, double rtg, std::size_t episodes,
                      std::uint64_t seed);

 private:
  replay::TokenSequence normalized(const replay::TokenSequence& seq) const;

  env::EnvSpec spec_;
  OdtConfig config_;
  ad::Rng rng_;
  std::unique_ptr<DecisionTransformer> model_;
  std::unique_ptr<ad::Adam> optimizer_;
};

}  // namespace dodt::odt
