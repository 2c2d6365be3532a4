#include "dodt/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace dodt::trainer {

namespace {

// Independent seed streams of one run.
enum Stream : std::uint64_t {
  kDreamerInit = 1,
  kOdtInit,
  kDreamerEpisodes,
  kOdtEpisodes,
  kEvalEpisodes,
  kOdtBatches,
};

std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t index) {
  return env::derive_seed(env::derive_seed(seed, s), index);
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Row = std::map<std::string, std::optional<double>>;

Row metric_values(const RoundReport& r, bool with_wall_clock) {
  Row row;
  row["round"] = static_cast<double>(r.round);
  row["env_steps_total"] = static_cast<double>(r.env_steps_total);
  row["dreamer_return"] = r.dreamer_return;
  row["odt_eval_mean"] = r.odt_eval_mean;
  row["odt_eval_std"] = r.odt_eval_std;
  if (r.benefited_count) row["benefited_count"] = static_cast<double>(*r.benefited_count);
  for (const char* key : {"wm_recon", "wm_kl", "wm_reward", "actor_loss", "value_loss",
                          "odt_nll", "odt_entropy"}) {
    const auto it = r.losses.find(key);
    if (it != r.losses.end()) row[key] = it->second;
  }
  if (with_wall_clock) row["wall_clock_s"] = r.wall_clock_s;
  return row;
}

void write_rows(std::ostream& out, const std::vector<Row>& rows) {
  out << kMetricsHeader << '\n';
  const auto columns = metric_columns();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c > 0) out << ',';
      const auto it = row.find(columns[c]);
      if (it != row.end() && it->second) out << format_number(*it->second);
    }
    out << '\n';
  }
}

}  // namespace

const char* const kMetricsHeader =
    "round,env_steps_total,dreamer_return,odt_eval_mean,odt_eval_std,benefited_count,"
    "wm_recon,wm_kl,wm_reward,actor_loss,value_loss,odt_nll,odt_entropy,wall_clock_s";

std::vector<std::string> metric_columns() {
  std::vector<std::string> out;
  std::stringstream ss(kMetricsHeader);
  std::string col;
  while (std::getline(ss, col, ',')) out.push_back(col);
  return out;
}

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::kOdt:
      return "odt";
    case Algo::kDreamer:
      return "dreamer";
    case Algo::kDodt:
      return "dodt";
  }
  return "?";
}

std::optional<Algo> algo_from_name(std::string_view name) {
  for (Algo a : {Algo::kOdt, Algo::kDreamer, Algo::kDodt}) {
    if (name == algo_name(a)) return a;
  }
  return std::nullopt;
}

const char* transfer_name(TransferPolicy p) {
  return p == TransferPolicy::kNone ? "none" : "real_env_trajectories";
}

std::optional<TransferPolicy> transfer_from_name(std::string_view name) {
  for (auto p : {TransferPolicy::kRealEnvTrajectories, TransferPolicy::kNone}) {
    if (name == transfer_name(p)) return p;
  }
  return std::nullopt;
}

std::size_t count_benefited(const replay::TrajectoryBuffer& buffer,
                            const std::set<std::uint64_t>& sampled_ids) {
  std::size_t n = 0;
  for (const auto& t : buffer.snapshot()) {
    if (t->source == replay::Source::kDreamer && sampled_ids.contains(t->created_at)) ++n;
  }
  return n;
}

DodtRun::DodtRun(const DodtConfig& config, Algo algo, std::uint64_t seed)
    : config_(config),
      algo_(algo),
      seed_(seed),
      buffer_(config.buffer_capacity,
              algo == Algo::kOdt ? replay::EvictionPolicy::kOldest
                                 : replay::EvictionPolicy::kLowestReward) {
  if (config_.rounds == 0) throw std::invalid_argument("DodtConfig: rounds must be >= 1");
  if (config_.eval_episodes == 0) {
    throw std::invalid_argument("DodtConfig: eval_episodes must be >= 1");
  }
  dreamer_env_ = env::make_env(config_.env);
  odt_env_ = dreamer_env_->clone();
  eval_env_ = dreamer_env_->clone();
  const env::EnvSpec& spec = dreamer_env_->spec();
  if (algo_ != Algo::kOdt) {
    dreamer_ = std::make_unique<world::DreamerAgent>(spec, config_.dreamer,
                                                     env::derive_seed(seed, kDreamerInit));
  }
  if (algo_ != Algo::kDreamer) {
    odt_ = std::make_unique<odt::OdtAgent>(spec, config_.odt, env::derive_seed(seed, kOdtInit));
    if (!config_.offline_path.empty()) {
      const auto offline = replay::load_trajectories(config_.offline_path);
      for (const auto& t : offline) {
        if (t.obs_dim() != spec.obs_dim || t.act_dim() != spec.act_dim) {
          throw std::invalid_argument("offline trajectories do not match env '" + config_.env +
                                      "' dimensions");
        }
      }
      buffer_.seed_from_offline(offline, buffer_.capacity());
    }
  }
}

std::uint64_t DodtRun::remaining() const {
  if (config_.env_step_budget == 0) return std::numeric_limits<std::uint64_t>::max();
  return config_.env_step_budget > env_steps_ ? config_.env_step_budget - env_steps_ : 0;
}

void DodtRun::insert(replay::Trajectory t) {
  auto candidates = buffer_.snapshot();
  auto evicted = buffer_.insert(std::move(t));
  if (evicted) evictions_.push_back({std::move(evicted), std::move(candidates)});
}

std::optional<RoundReport> DodtRun::run_round() {
  if (round_ >= config_.rounds || remaining() == 0) return std::nullopt;
  const auto start = std::chrono::steady_clock::now();
  RoundReport report;
  report.round = ++round_;
  const std::string where = "round " + std::to_string(round_);
  const bool budgeted = config_.env_step_budget > 0;

  // Dreamer interaction phase.
  std::vector<replay::Trajectory> fresh;
  if (dreamer_ && config_.dreamer_interaction) {
    try {
      const auto buffer_before = buffer_.read_count() + buffer_.write_count();
      const std::uint64_t steps =
          std::min<std::uint64_t>(config_.dreamer_steps, remaining());
      std::uint64_t collected = 0;
      while (collected < steps) {
        const std::uint64_t env_seed = stream_seed(seed_, kDreamerEpisodes, dreamer_episodes_++);
        const std::size_t cap = static_cast<std::size_t>(steps - collected);
        fresh.push_back(dreamer_->dataset().size() < config_.dreamer.seed_episodes
                            ? dreamer_->collect_random_episode(*dreamer_env_, env_seed, cap)
                            : dreamer_->collect_episode(*dreamer_env_, env_seed,
                                                        world::ActMode::kExplore, cap));
        collected += fresh.back().length();
      }
      env_steps_ += collected;
      if (!fresh.empty()) {
        double sum = 0.0;
        for (const auto& t : fresh) sum += t.total_return;
        report.dreamer_return = sum / static_cast<double>(fresh.size());
      }
      const auto& episodes = dreamer_->dataset().episodes();
      const bool trainable = std::any_of(episodes.begin(), episodes.end(), [&](const auto& e) {
        return e.length() >= config_.dreamer.seq_len;
      });
      if (trainable && config_.dreamer.train_steps > 0) {
        const auto stats = dreamer_->train(config_.dreamer.train_steps);
        report.losses["wm_recon"] = stats.world.reconstruction;
        report.losses["wm_kl"] = stats.world.kl;
        report.losses["wm_reward"] = stats.world.reward;
        report.losses["actor_loss"] = stats.actor_loss;
        report.losses["value_loss"] = stats.value_loss;
        if (stats.skipped > 0) {
          spdlog::warn("{}: {} of {} Dreamer updates skipped", where, stats.skipped,
                       stats.updates);
        }
      }
      report.dreamer_buffer_accesses = buffer_.read_count() + buffer_.write_count() - buffer_before;
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ", Dreamer phase: " + e.what());
    }
    // Trajectory transfer.
    if (odt_ && config_.transfer == TransferPolicy::kRealEnvTrajectories) {
      for (auto& t : fresh) insert(std::move(t));
    }
  }

  if (odt_) {
    try {
      const auto dataset_before = dreamer_ ? dreamer_->dataset().write_count() : 0;
      // Exploration rollout conditioned on the online RTG.
      if (remaining() > 0) {
        auto rollout = odt_->rollout_online(
            *odt_env_, stream_seed(seed_, kOdtEpisodes, round_), config_.odt.online_rtg,
            odt::RolloutMode::kExplore, budgeted ? static_cast<std::size_t>(remaining()) : 0);
        env_steps_ += rollout.trajectory.length();
        insert(std::move(rollout.trajectory));
      }
      // Fine-tuning on the replay buffer.
      std::set<std::uint64_t> sampled;
      double nll = 0.0, entropy = 0.0;
      std::size_t updates = 0;
      if (buffer_.size() > 0) {
        for (std::size_t i = 0; i < config_.odt.iterations; ++i) {
          const auto upd = odt_->training_step(
              buffer_, stream_seed(seed_, kOdtBatches, round_ * config_.odt.iterations + i));
          for (const auto& t : upd.sampled) sampled.insert(t->created_at);
          if (upd.losses.skipped) continue;
          nll += upd.losses.nll;
          entropy += upd.losses.entropy;
          ++updates;
        }
      }
      if (updates > 0) {
        report.losses["odt_nll"] = nll / static_cast<double>(updates);
        report.losses["odt_entropy"] = entropy / static_cast<double>(updates);
      }
      report.benefited_count = count_benefited(buffer_, sampled);
      // Evaluation on a fixed set of episode seeds.
      const auto eval = odt_->evaluate(*eval_env_, config_.odt.eval_rtg, config_.eval_episodes,
                                       env::derive_seed(seed_, kEvalEpisodes));
      report.odt_eval_mean = eval.mean;
      report.odt_eval_std = eval.std;
      report.odt_dataset_writes =
          dreamer_ ? dreamer_->dataset().write_count() - dataset_before : 0;
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ", ODT phase: " + e.what());
    }
  }

  report.env_steps_total = env_steps_;
  report.imagine_env_calls = dreamer_ ? dreamer_->imagine_env_calls() : 0;
  report.buffer_size = buffer_.size();
  for (const auto& t : buffer_.snapshot()) {
    if (t->source == replay::Source::kDreamer) ++report.buffer_dreamer_entries;
  }
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_metrics(std::ostream& out, const std::vector<RoundReport>& rounds,
                   bool with_wall_clock) {
  std::vector<Row> rows;
  rows.reserve(rounds.size());
  for (const auto& r : rounds) rows.push_back(metric_values(r, with_wall_clock));
  write_rows(out, rows);
}

void write_summary(std::ostream& out, const ExperimentResult& result) {
  std::vector<Row> rows;
  for (const auto& row : result.summary) rows.push_back(row);
  write_rows(out, rows);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ExperimentResult run_experiment(const DodtConfig& config, Algo algo,
                                const std::vector<std::uint64_t>& seeds,
                                const ExperimentOptions& options) {
  if (seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);
  ExperimentResult result;
  for (std::uint64_t seed : seeds) {
    DodtRun run(config, algo, seed);
    SeedRun sr{seed, {}};
    if (options.on_start) options.on_start(run);
    while (auto report = run.run_round()) {
      spdlog::debug("{} seed {} round {}: env_steps={} odt_eval={} dreamer_return={}",
                   algo_name(algo), seed, report->round, report->env_steps_total,
                   report->odt_eval_mean ? format_number(*report->odt_eval_mean) : "-",
                   report->dreamer_return ? format_number(*report->dreamer_return) : "-");
      if (options.on_round) options.on_round(run, *report);
      sr.rounds.push_back(std::move(*report));
    }
    if (!options.out_dir.empty()) {
      std::ofstream f(options.out_dir / ("metrics_seed" + std::to_string(seed) + ".csv"));
      write_metrics(f, sr.rounds, options.with_wall_clock);
      if (!f) throw std::runtime_error("failed to write metrics for seed " + std::to_string(seed));
    }
    if (options.on_seed_done) options.on_seed_done(run);
    result.runs.push_back(std::move(sr));
  }

  std::size_t max_rounds = 0;
  for (const auto& r : result.runs) max_rounds = std::max(max_rounds, r.rounds.size());
  const auto columns = metric_columns();
  for (std::size_t i = 0; i < max_rounds; ++i) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& run : result.runs) {
      if (i >= run.rounds.size()) continue;
      for (const auto& [k, v] : metric_values(run.rounds[i], options.with_wall_clock)) {
        if (v) values[k].push_back(*v);
      }
    }
    Row row;
    for (const auto& c : columns) {
      const auto it = values.find(c);
      if (it != values.end()) row[c] = median(it->second);
    }
    result.summary.push_back(std::move(row));
  }
  if (!options.out_dir.empty()) {
    std::ofstream f(options.out_dir / "summary.csv");
    write_summary(f, result);
    if (!f) throw std::runtime_error("failed to write summary.csv");
  }
  return result;
}

std::optional<std::uint64_t> steps_to_threshold(const std::vector<RoundReport>& rounds,
                                                double threshold) {
  for (const auto& r : rounds) {
    if (r.odt_eval_mean && *r.odt_eval_mean >= threshold) return r.env_steps_total;
  }
  return std::nullopt;
}

}  // namespace dodt::trainer
