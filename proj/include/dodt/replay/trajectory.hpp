#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dodt::replay {

enum class Source { kDreamer, kOdt, kOffline };

const char* source_name(Source s);

struct Trajectory {
  std::vector<std::vector<double>> observations;  // T + 1
  std::vector<std::vector<double>> actions;       // T
  std::vector<double> rewards;                    // T
  double total_return = 0.0;
  Source source = Source::kOffline;
  std::uint64_t created_at = 0;

  std::size_t length() const { return rewards.size(); }
  std::size_t obs_dim() const { return observations.front().size(); }
  std::size_t act_dim() const { return actions.empty() ? 0 : actions.front().size(); }

  // Throws std::invalid_argument if lengths, dims, or total_return disagree.
  void validate() const;

  // Fills total_return with the exact sum of rewards and stamps created_at
  // from a process-wide monotone counter.
  static Trajectory make(std::vector<std::vector<double>> observations,
                         std::vector<std::vector<double>> actions,
                         std::vector<double> rewards, Source source);
};

std::uint64_t next_creation_stamp();

// Sum of rewards in index order.
double sum_rewards(std::span<const double> rewards);

// g_t = sum_{k >= t} gamma^(k - t) r_k, by backward recursion.
std::vector<double> compute_rtg(std::span<const double> rewards, double gamma);

// Text format:
//   dodt-traj v1 obs_dim=<d> act_dim=<d>
//   <T>
//   o_0 a_0 r_0          (T rows of obs_dim + act_dim + 1 numbers)
//   ...
//   o_T                  (final observation, obs_dim numbers)
// repeated per trajectory. Numbers are written with 17 significant digits.
void save_trajectories(const std::filesystem::path& path,
                       std::span<const Trajectory> trajectories);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path,
                                          Source source = Source::kOffline);

}  // namespace dodt::replay
