#include "dodt/world/dreamer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "dodt/autodiff/ops.hpp"

namespace dodt::world {

using namespace ad;

DreamerAgent::DreamerAgent(const env::EnvSpec& spec, DreamerConfig config, std::uint64_t seed)
    : spec_(spec), config_(std::move(config)), rng_(seed) {
  if (config_.horizon <= 0 || config_.seq_len < 2 || config_.batch == 0 ||
      !(config_.gamma > 0.0 && config_.gamma < 1.0) || config_.explore_noise < 0.0) {
    throw std::invalid_argument("DreamerAgent: invalid hyperparameters");
  }
  config_.model.obs_dim = spec_.obs_dim;
  config_.model.act_dim = spec_.act_dim;
  model_ = std::make_unique<WorldModel>(config_.model, rng_);
  const std::size_t feat = model_->feature_dim();
  actor_ = std::make_unique<ActionModel>(feat, spec_.act_dim, config_.actor_hidden, rng_);
  value_ = std::make_unique<ValueModel>(feat, config_.value_hidden, rng_);
  model_opt_ = std::make_unique<Adam>(nn::tensors(model_->parameters()), config_.model_optim);
  actor_opt_ = std::make_unique<Adam>(nn::tensors(actor_->parameters()), config_.actor_optim);
  value_opt_ = std::make_unique<Adam>(nn::tensors(value_->parameters()), config_.value_optim);
  reset_episode();
}

void DreamerAgent::reset_episode() {
  state_ = model_->initial_state(1);
  prev_action_ = Tensor::zeros({1, spec_.act_dim});
}

std::vector<double> DreamerAgent::act(std::span<const double> observation, ActMode mode) {
  NoGradGuard no_grad;
  const Tensor obs({1, spec_.obs_dim}, {observation.begin(), observation.end()});
  state_ = model_->posterior_step(state_, prev_action_, obs, rng_).state;
  const Tensor feat = state_.features();
  std::vector<double> unit;
  if (mode == ActMode::kEval) {
    const Tensor a = actor_->mode(feat);
    unit.assign(a.values().begin(), a.values().end());
  } else {
    const Tensor a = actor_->sample(feat, rng_);
    unit.assign(a.values().begin(), a.values().end());
    std::normal_distribution<double> noise(0.0, config_.explore_noise);
    for (double& u : unit) u = std::clamp(u + noise(rng_), -1.0, 1.0);
  }
  prev_action_ = Tensor({1, spec_.act_dim}, unit);
  auto action = spec_.denormalize_action(unit);
  for (std::size_t i = 0; i < action.size(); ++i) {
    action[i] = std::clamp(action[i], spec_.act_low[i], spec_.act_high[i]);
  }
  return action;
}

namespace {

template <typename Policy>
replay::Trajectory run_episode(env::Environment& env, std::uint64_t env_seed,
                               std::size_t max_steps, Policy&& policy) {
  std::vector<std::vector<double>> obs{env.reset(env_seed)};
  std::vector<std::vector<double>> acts;
  std::vector<double> rews;
  for (;;) {
    acts.push_back(policy(obs.back()));
    const env::StepResult r = env.step(acts.back());
    obs.push_back(r.observation);
    rews.push_back(r.reward);
    if (r.done() || (max_steps > 0 && rews.size() >= max_steps)) break;
  }
  return replay::Trajectory::make(std::move(obs), std::move(acts), std::move(rews),
                                  replay::Source::kDreamer);
}

}  // namespace

replay::Trajectory DreamerAgent::collect_episode(env::Environment& env, std::uint64_t env_seed,
                                                 ActMode mode, std::size_t max_steps) {
  reset_episode();
  auto episode = run_episode(env, env_seed, max_steps,
                             [&](const std::vector<double>& o) { return act(o, mode); });
  dataset_.add(episode);
  return episode;
}

replay::Trajectory DreamerAgent::collect_random_episode(env::Environment& env,
                                                        std::uint64_t env_seed,
                                                        std::size_t max_steps) {
  auto episode = run_episode(env, env_seed, max_steps, [&](const std::vector<double>&) {
    std::vector<double> a(spec_.act_dim);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = std::uniform_real_distribution<double>(spec_.act_low[i], spec_.act_high[i])(rng_);
    }
    return a;
  });
  dataset_.add(episode);
  return episode;
}

SequenceInputs DreamerAgent::to_inputs(const replay::SequenceBatch& batch) const {
  const std::size_t b = batch.batch, len = batch.length, od = batch.obs_dim,
                    ad = batch.act_dim;
  SequenceInputs in;
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> o(b * od), a(b * ad), r(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t row = i * len + t;
      std::copy_n(batch.observations.begin() + static_cast<std::ptrdiff_t>(row * od), od,
                  o.begin() + static_cast<std::ptrdiff_t>(i * od));
      const auto unit = spec_.normalize_action(
          std::span(batch.actions).subspan(row * ad, ad));
      std::copy(unit.begin(), unit.end(), a.begin() + static_cast<std::ptrdiff_t>(i * ad));
      r[i] = batch.rewards[row];
    }
    in.observations.emplace_back(Shape{b, od}, std::move(o));
    in.actions.emplace_back(Shape{b, ad}, std::move(a));
    in.rewards.emplace_back(Shape{b, 1}, std::move(r));
  }
  return in;
}

namespace {

LatentState take_rows(const LatentState& s, std::span<const std::size_t> rows) {
  return {gather_rows(s.deter, rows), gather_rows(s.stoch, rows),
          gather_rows(s.stoch_mean, rows), gather_rows(s.stoch_std, rows)};
}

}  // namespace

DreamerStats DreamerAgent::train_step() {
  DreamerStats stats;
  stats.updates = 1;
  const auto batch = dataset_.sample_sequences(config_.batch, config_.seq_len, rng_());
  LatentState starts;
  stats.world = dynamics_learning_step(*model_, *model_opt_, to_inputs(batch), rng_, &starts);
  if (stats.world.skipped) {
    stats.skipped = 1;
    return stats;
  }
  const std::size_t total = starts.batch();
  if (config_.imagine_starts > 0 && config_.imagine_starts < total) {
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < config_.imagine_starts; ++i) {
      std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, total - 1)(rng_)]);
    }
    idx.resize(config_.imagine_starts);
    starts = take_rows(starts, idx);
  }

  ImaginedRollout rollout;
  {
    const auto wm_params = model_->parameters();
    const auto v_params = value_->parameters();
    nn::FreezeGuard freeze_model(wm_params);
    nn::FreezeGuard freeze_value(v_params);
    const std::uint64_t before = env::thread_env_calls();
    rollout = imagine(*model_, *actor_, *value_, starts, config_.horizon, rng_);
    imagine_env_calls_ += env::thread_env_calls() - before;
    ++imagine_calls_;
    stats.actor_loss = actor_update(*actor_, *actor_opt_, rollout, config_.gamma, config_.variant);
  }
  stats.value_loss = value_update(*value_, *value_opt_, rollout, config_.gamma, config_.variant);
  if (!std::isfinite(stats.actor_loss) || !std::isfinite(stats.value_loss)) stats.skipped = 1;
  return stats;
}

DreamerStats DreamerAgent::train(std::size_t steps) {
  DreamerStats sum;
  for (std::size_t i = 0; i < steps; ++i) {
    const DreamerStats s = train_step();
    sum.world.reconstruction += s.world.reconstruction;
    sum.world.reward += s.world.reward;
    sum.world.kl += s.world.kl;
    sum.world.total += s.world.total;
    sum.actor_loss += s.actor_loss;
    sum.value_loss += s.value_loss;
    sum.updates += s.updates;
    sum.skipped += s.skipped;
  }
  if (steps > 0) {
    const double n = static_cast<double>(steps);
    sum.world.reconstruction /= n;
    sum.world.reward /= n;
    sum.world.kl /= n;
    sum.world.total /= n;
    sum.actor_loss /= n;
    sum.value_loss /= n;
  }
  return sum;
}

}  // namespace dodt::world
