#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dodt/autodiff/adam.hpp"
#include "dodt/env/environment.hpp"
#include "dodt/replay/buffer.hpp"
#include "dodt/world/behavior.hpp"
#include "dodt/world/world_model.hpp"

namespace dodt::world {

struct DreamerConfig {
  WorldModelConfig model;  // obs_dim / act_dim are filled from the env spec
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> value_hidden{64, 64};
  int horizon = 15;                 // H
  std::size_t train_steps = 100;    // C, updates per round
  std::size_t seq_len = 50;         // L
  std::size_t batch = 16;           // B
  std::size_t seed_episodes = 5;    // S
  // Imagination starts from at most this many posterior states per update,
  // drawn without replacement; 0 uses all B * L.
  std::size_t imagine_starts = 0;
  double gamma = 0.99;
  double explore_noise = 0.3;  // in normalized action units
  ad::AdamConfig model_optim{6e-4, 0.9, 0.999, 1e-8, false, 100.0};
  ad::AdamConfig actor_optim{8e-5, 0.9, 0.999, 1e-8, false, 100.0};
  ad::AdamConfig value_optim{8e-5, 0.9, 0.999, 1e-8, false, 100.0};
  BehaviorVariant variant = BehaviorVariant::kStandard;
};

enum class ActMode { kExplore, kEval };

struct DreamerStats {
  WorldLosses world;  // averaged over the updates
  double actor_loss = 0.0;
  double value_loss = 0.0;
  std::size_t updates = 0;
  std::size_t skipped = 0;
};

// Dreamer learner: owns the world model, actor, value model, their
// optimizers, and the sequence dataset D.
class DreamerAgent {
 public:
  DreamerAgent(const env::EnvSpec& spec, DreamerConfig config, std::uint64_t seed);

  const DreamerConfig& config() const { return config_; }
  const env::EnvSpec& spec() const { return spec_; }

  // Clears the recurrent state at the start of an episode.
  void reset_episode();
  // Filters `observation` into the latent state and returns an env action:
  // the squashed mean in eval mode, or a sample plus Gaussian noise of scale
  // explore_noise, clipped to the action bounds, in explore mode.
  std::vector<double> act(std::span<const double> observation, ActMode mode);

  // Resets `env` with `env_seed`, runs to termination (or `max_steps` when
  // nonzero), appends the episode to D, and returns it.
  replay::Trajectory collect_episode(env::Environment& env, std::uint64_t env_seed,
                                     ActMode mode, std::size_t max_steps = 0);
  // Same with uniformly random actions.
  replay::Trajectory collect_random_episode(env::Environment& env, std::uint64_t env_seed,
                                            std::size_t max_steps = 0);

  // One dynamics step, one imagination, one actor and one value update.
  DreamerStats train_step();
  // `steps` train_step()s with averaged statistics.
  DreamerStats train(std::size_t steps);

  const replay::SequenceDataset& dataset() const { return dataset_; }
  const WorldModel& world_model() const { return *model_; }
  const ActionModel& actor() const { return *actor_; }
  const ValueModel& value() const { return *value_; }

  nn::ParamList world_parameters() const { return model_->parameters(); }
  nn::ParamList actor_parameters() const { return actor_->parameters(); }
  nn::ParamList value_parameters() const { return value_->parameters(); }

  // Environment calls observed on this thread while imagining, cumulative.
  std::uint64_t imagine_env_calls() const { return imagine_env_calls_; }
  std::uint64_t imagine_calls() const { return imagine_calls_; }

  SequenceInputs to_inputs(const replay::SequenceBatch& batch) const;

 private:
  env::EnvSpec spec_;
  DreamerConfig config_;
  ad::Rng rng_;
  std::unique_ptr<WorldModel> model_;
  std::unique_ptr<ActionModel> actor_;
  std::unique_ptr<ValueModel> value_;
  std::unique_ptr<ad::Adam> model_opt_;
  std::unique_ptr<ad::Adam> actor_opt_;
  std::unique_ptr<ad::Adam> value_opt_;
  replay::SequenceDataset dataset_;
  LatentState state_;
  Tensor prev_action_;
  std::uint64_t imagine_env_calls_ = 0;
  std::uint64_t imagine_calls_ = 0;
};

}  // namespace dodt::world
