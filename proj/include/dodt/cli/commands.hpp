#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dodt::cli {

// Each command returns a process exit code and writes diagnostics to `err`.

struct TrainArgs {
  std::string config_path;
  std::optional<std::string> algo;
  std::optional<std::uint64_t> seed;  // replaces the config's seed list
  std::optional<std::string> out_dir;
};

struct EvalArgs {
  std::string checkpoint_dir;
  std::optional<std::string> env;  // defaults to the checkpoint's env
  std::size_t episodes = 10;
  double rtg = 0.0;
  std::optional<std::uint64_t> seed;
  std::string dump_episodes;  // CSV of per-episode returns; empty = none
};

struct GradcheckArgs {
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  std::string corrupt_op;  // fault injection for tests; empty = none
};

struct PlotArgs {
  std::vector<std::string> metrics;
  std::string out_path;
};

inline constexpr const char* kResolvedConfigFile = "config.resolved.ini";

// DODT_SEED, when set, wins over `flag`.
std::optional<std::uint64_t> resolve_seed(std::optional<std::uint64_t> flag);

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_plot(const PlotArgs& args, std::ostream& out, std::ostream& err);

}  // namespace dodt::cli
