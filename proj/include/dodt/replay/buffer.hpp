#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "dodt/replay/trajectory.hpp"

namespace dodt::replay {

enum class EvictionPolicy { kOldest, kLowestReward };

const char* policy_name(EvictionPolicy p);

using TrajectoryPtr = std::shared_ptr<const Trajectory>;

// Capacity-bounded trajectory store. Writers are serialized by a mutex and
// entries are immutable, so snapshot() hands readers a consistent view.
class TrajectoryBuffer {
 public:
  TrajectoryBuffer(std::size_t capacity, EvictionPolicy policy);

  // When full, kOldest evicts the entry with the smallest created_at.
  // kLowestReward evicts the lowest total_return among the entries and the
  // incoming trajectory (ties to the smaller created_at), so the incoming
  // trajectory itself is returned when it is the worst. Returns the evicted
  // trajectory, or null when nothing was evicted.
  TrajectoryPtr insert(Trajectory t);

  // Replaces the contents with the n highest-return trajectories of
  // `offline` (all of them when fewer), capped at capacity.
  void seed_from_offline(std::span<const Trajectory> offline, std::size_t n);

  std::vector<TrajectoryPtr> snapshot() const;

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  EvictionPolicy policy() const { return policy_; }

  std::uint64_t read_count() const { return reads_.load(); }
  std::uint64_t write_count() const { return writes_.load(); }

 private:
  std::size_t capacity_;
  EvictionPolicy policy_;
  mutable std::mutex mu_;
  std::vector<TrajectoryPtr> entries_;
  mutable std::atomic<std::uint64_t> reads_{0};
  std::atomic<std::uint64_t> writes_{0};
};

// Fixed-length windows stored batch-major: obs[(b * L + t) * obs_dim + j].
struct SequenceBatch {
  std::size_t batch = 0, length = 0, obs_dim = 0, act_dim = 0;
  std::vector<double> observations;
  std::vector<double> actions;
  std::vector<double> rewards;
  // (episode index, start index) of every window.
  std::vector<std::pair<std::size_t, std::size_t>> origins;
};

class SequenceDataset {
 public:
  void add(Trajectory episode);

  const std::vector<Trajectory>& episodes() const;
  std::size_t total_steps() const { return total_steps_; }
  std::size_t size() const { return episodes_.size(); }

  // B windows of L consecutive steps (o_t, a_t, r_t), each inside one
  // episode; the (episode, start) pair is uniform over all valid windows.
  SequenceBatch sample_sequences(std::size_t batch, std::size_t length,
                                 std::uint64_t rng_seed) const;

  std::uint64_t read_count() const { return reads_.load(); }
  std::uint64_t write_count() const { return writes_.load(); }

 private:
  std::vector<Trajectory> episodes_;
  std::size_t total_steps_ = 0;
  mutable std::atomic<std::uint64_t> reads_{0};
  std::atomic<std::uint64_t> writes_{0};
};

// Left-padded context window of up to K steps.
struct TokenSequence {
  std::vector<double> rtg;                       // K
  std::vector<std::vector<double>> observations;  // K x obs_dim
  std::vector<std::vector<double>> actions;       // K x act_dim
  std::vector<std::size_t> timesteps;             // K
  std::size_t valid_len = 0;

  std::size_t context() const { return rtg.size(); }
  std::size_t pad() const { return context() - valid_len; }
  void validate() const;
};

// Window of steps [start, start + count) of `t` with per-step RTG, left
// padded with zeros to `context` positions.
TokenSequence make_token_sequence(const Trajectory& t, std::span<const double> rtg,
                                  std::size_t start, std::size_t count,
                                  std::size_t context);

struct OdtSample {
  TokenSequence sequence;
  std::size_t entry = 0;  // index into the snapshot
  std::size_t start = 0;
  TrajectoryPtr trajectory;
};

// Trajectories are drawn with probability proportional to their length and
// the window start uniformly; each window covers min(K, length) steps.
std::vector<OdtSample> sample_subsequences_for_odt(const TrajectoryBuffer& buffer,
                                                   std::size_t batch, std::size_t context,
                                                   double gamma, std::uint64_t rng_seed);

}  // namespace dodt::replay
