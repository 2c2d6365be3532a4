#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dodt/env/environment.hpp"
#include "dodt/odt/policy.hpp"
#include "dodt/replay/buffer.hpp"
#include "dodt/world/dreamer.hpp"

namespace dodt::trainer {

enum class Algo { kOdt, kDreamer, kDodt };
enum class TransferPolicy { kRealEnvTrajectories, kNone };

const char* algo_name(Algo a);
std::optional<Algo> algo_from_name(std::string_view name);
const char* transfer_name(TransferPolicy p);
std::optional<TransferPolicy> transfer_from_name(std::string_view name);

struct DodtConfig {
  std::string env = "pendulum";
  std::size_t rounds = 1;             // R
  std::size_t buffer_capacity = 20;   // N
  std::size_t dreamer_steps = 200;    // T, env steps Dreamer collects per round
  std::size_t eval_episodes = 2;
  // Stops the run once this many env steps have been taken; the last round's
  // collection is truncated to land on it exactly. 0 disables.
  std::uint64_t env_step_budget = 0;
  TransferPolicy transfer = TransferPolicy::kRealEnvTrajectories;
  // When false the Dreamer phase neither collects nor trains.
  bool dreamer_interaction = true;
  // Optional trajectory file used to seed the replay buffer (top-N returns).
  std::string offline_path;
  world::DreamerConfig dreamer;
  odt::OdtConfig odt;
};

// Named loss terms averaged over the round's updates; absent when the
// corresponding learner did not update.
using LossMap = std::map<std::string, double>;

struct RoundReport {
  std::size_t round = 0;  // 1-based
  std::uint64_t env_steps_total = 0;
  std::optional<double> dreamer_return;  // mean return of this round's Dreamer episodes
  std::optional<double> odt_eval_mean;
  std::optional<double> odt_eval_std;
  std::optional<std::size_t> benefited_count;
  LossMap losses;
  double wall_clock_s = 0.0;

  // Ownership audit: replay-buffer accesses made during the Dreamer phase and
  // dataset writes made during the ODT phases. Both must stay 0.
  std::uint64_t dreamer_buffer_accesses = 0;
  std::uint64_t odt_dataset_writes = 0;
  std::uint64_t imagine_env_calls = 0;
  std::size_t buffer_size = 0;
  std::size_t buffer_dreamer_entries = 0;
};

// |{t in buffer : t.source == dreamer and t.created_at in sampled_ids}|.
std::size_t count_benefited(const replay::TrajectoryBuffer& buffer,
                            const std::set<std::uint64_t>& sampled_ids);

// Learners, buffers and environments of one seeded run.
class DodtRun {
 public:
  DodtRun(const DodtConfig& config, Algo algo, std::uint64_t seed);

  // Executes the next round. Returns std::nullopt once the env-step budget
  // is exhausted or R rounds have run.
  std::optional<RoundReport> run_round();

  const DodtConfig& config() const { return config_; }
  Algo algo() const { return algo_; }
  std::uint64_t env_steps_total() const { return env_steps_; }
  std::size_t rounds_done() const { return round_; }
  const replay::TrajectoryBuffer& buffer() const { return buffer_; }
  const world::DreamerAgent* dreamer() const { return dreamer_.get(); }
  const odt::OdtAgent* odt() const { return odt_.get(); }
  // Trajectories evicted from the buffer so far, with the buffer content
  // seen at each eviction (for eviction audits).
  struct Eviction {
    replay::TrajectoryPtr evicted;
    std::vector<replay::TrajectoryPtr> candidates;
  };
  const std::vector<Eviction>& evictions() const { return evictions_; }

 private:
  std::uint64_t remaining() const;
  void insert(replay::Trajectory t);

  DodtConfig config_;
  Algo algo_;
  std::uint64_t seed_;
  std::unique_ptr<env::Environment> dreamer_env_;
  std::unique_ptr<env::Environment> odt_env_;
  std::unique_ptr<env::Environment> eval_env_;
  std::unique_ptr<world::DreamerAgent> dreamer_;
  std::unique_ptr<odt::OdtAgent> odt_;
  replay::TrajectoryBuffer buffer_;
  std::vector<Eviction> evictions_;
  std::uint64_t env_steps_ = 0;
  std::size_t round_ = 0;
  std::uint64_t dreamer_episodes_ = 0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<RoundReport> rounds;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;
  // Per-round medians across seeds of every metric column, in CSV form.
  std::vector<std::map<std::string, std::optional<double>>> summary;
};

extern const char* const kMetricsHeader;
std::vector<std::string> metric_columns();

// One CSV row per report, missing values empty. wall_clock_s is written only
// when `with_wall_clock` is set, so that metrics files stay reproducible.
void write_metrics(std::ostream& out, const std::vector<RoundReport>& rounds,
                   bool with_wall_clock);
void write_summary(std::ostream& out, const ExperimentResult& result);

struct ExperimentOptions {
  std::filesystem::path out_dir;  // empty: write nothing
  bool with_wall_clock = false;
  // Called before the first round, e.g. to load pretrained weights. Parameter
  // tensors share storage, so their values may be overwritten in place.
  std::function<void(const DodtRun&)> on_start;
  // Called with each finished run, e.g. to save checkpoints.
  std::function<void(const DodtRun&)> on_seed_done;
  // Called after every round.
  std::function<void(const DodtRun&, const RoundReport&)> on_round;
};

// Runs every seed to completion. With a nonempty out_dir, writes
// metrics_seed<k>.csv per seed and summary.csv.
ExperimentResult run_experiment(const DodtConfig& config, Algo algo,
                                const std::vector<std::uint64_t>& seeds,
                                const ExperimentOptions& options = {});

// Env steps at the first round whose odt_eval_mean reaches `threshold`, or
// std::nullopt when none does.
std::optional<std::uint64_t> steps_to_threshold(const std::vector<RoundReport>& rounds,
                                                double threshold);

double median(std::vector<double> values);

}  // namespace dodt::trainer
