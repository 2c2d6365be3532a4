#include "dodt/replay/buffer.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace dodt::replay {

const char* policy_name(EvictionPolicy p) {
  return p == EvictionPolicy::kOldest ? "oldest" : "lowest_reward";
}

namespace {

// True when a should be evicted before b.
bool worse(const Trajectory& a, const Trajectory& b) {
  if (a.total_return != b.total_return) return a.total_return < b.total_return;
  return a.created_at < b.created_at;
}

}  // namespace

TrajectoryBuffer::TrajectoryBuffer(std::size_t capacity, EvictionPolicy policy)
    : capacity_(capacity), policy_(policy) {
  if (capacity == 0) throw std::invalid_argument("TrajectoryBuffer: capacity must be positive");
}

TrajectoryPtr TrajectoryBuffer::insert(Trajectory t) {
  t.validate();
  auto incoming = std::make_shared<const Trajectory>(std::move(t));
  std::lock_guard lock(mu_);
  ++writes_;
  if (entries_.size() < capacity_) {
    entries_.push_back(std::move(incoming));
    return nullptr;
  }
  auto victim = entries_.begin();
  if (policy_ == EvictionPolicy::kOldest) {
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      if ((*it)->created_at < (*victim)->created_at) victim = it;
    }
  } else {
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      if (worse(**it, **victim)) victim = it;
    }
    if (worse(*incoming, **victim)) return incoming;
  }
  TrajectoryPtr evicted = std::move(*victim);
  *victim = std::move(incoming);
  return evicted;
}

void TrajectoryBuffer::seed_from_offline(std::span<const Trajectory> offline,
                                         std::size_t n) {
  if (offline.empty()) throw std::invalid_argument("seed_from_offline: offline set is empty");
  std::vector<const Trajectory*> order;
  for (const auto& t : offline) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(),
                   [](const Trajectory* a, const Trajectory* b) { return worse(*b, *a); });
  const std::size_t keep = std::min({n, order.size(), capacity_});
  std::vector<TrajectoryPtr> fresh;
  for (std::size_t i = 0; i < keep; ++i) {
    order[i]->validate();
    fresh.push_back(std::make_shared<const Trajectory>(*order[i]));
  }
  std::lock_guard lock(mu_);
  ++writes_;
  entries_ = std::move(fresh);
}

std::vector<TrajectoryPtr> TrajectoryBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  ++reads_;
  return entries_;
}

std::size_t TrajectoryBuffer::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void SequenceDataset::add(Trajectory episode) {
  episode.validate();
  ++writes_;
  total_steps_ += episode.length();
  episodes_.push_back(std::move(episode));
}

const std::vector<Trajectory>& SequenceDataset::episodes() const {
  ++reads_;
  return episodes_;
}

SequenceBatch SequenceDataset::sample_sequences(std::size_t batch, std::size_t length,
                                                std::uint64_t rng_seed) const {
  ++reads_;
  if (length == 0) throw std::invalid_argument("sample_sequences: length must be positive");
  // cumulative[i] = number of valid windows in episodes [0, i].
  std::vector<std::size_t> cumulative;
  std::size_t total = 0;
  for (const auto& e : episodes_) {
    if (e.length() >= length) total += e.length() - length + 1;
    cumulative.push_back(total);
  }
  if (total == 0) {
    throw std::invalid_argument("sample_sequences: no episode has length >= " +
                                std::to_string(length));
  }
  const std::size_t od = episodes_.front().obs_dim();
  const std::size_t ad = episodes_.front().act_dim();
  SequenceBatch out;
  out.batch = batch;
  out.length = length;
  out.obs_dim = od;
  out.act_dim = ad;
  out.observations.reserve(batch * length * od);
  out.actions.reserve(batch * length * ad);
  out.rewards.reserve(batch * length);
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t w = pick(rng);
    const std::size_t ep = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), w) - cumulative.begin());
    const std::size_t start = w - (ep == 0 ? 0 : cumulative[ep - 1]);
    const Trajectory& e = episodes_[ep];
    for (std::size_t t = start; t < start + length; ++t) {
      out.observations.insert(out.observations.end(), e.observations[t].begin(),
                              e.observations[t].end());
      out.actions.insert(out.actions.end(), e.actions[t].begin(), e.actions[t].end());
      out.rewards.push_back(e.rewards[t]);
    }
    out.origins.emplace_back(ep, start);
  }
  return out;
}

void TokenSequence::validate() const {
  const std::size_t k = rtg.size();
  if (k == 0 || observations.size() != k || actions.size() != k || timesteps.size() != k) {
    throw std::invalid_argument("token sequence: inconsistent context lengths");
  }
  if (valid_len == 0 || valid_len > k) {
    throw std::invalid_argument("token sequence: valid_len " + std::to_string(valid_len) +
                                " outside [1, " + std::to_string(k) + "]");
  }
  for (std::size_t i = pad() + 1; i < k; ++i) {
    if (timesteps[i] <= timesteps[i - 1]) {
      throw std::invalid_argument("token sequence: timesteps must strictly increase");
    }
  }
}

TokenSequence make_token_sequence(const Trajectory& t, std::span<const double> rtg,
                                  std::size_t start, std::size_t count,
                                  std::size_t context) {
  if (count == 0 || count > context || start + count > t.length()) {
    throw std::invalid_argument("make_token_sequence: window out of range");
  }
  const std::size_t pad = context - count;
  TokenSequence s;
  s.rtg.assign(context, 0.0);
  s.observations.assign(context, std::vector<double>(t.obs_dim(), 0.0));
  s.actions.assign(context, std::vector<double>(t.act_dim(), 0.0));
  s.timesteps.assign(context, 0);
  s.valid_len = count;
  for (std::size_t i = 0; i < count; ++i) {
    s.rtg[pad + i] = rtg[start + i];
    s.observations[pad + i] = t.observations[start + i];
    s.actions[pad + i] = t.actions[start + i];
    s.timesteps[pad + i] = start + i;
  }
  return s;
}

std::vector<OdtSample> sample_subsequences_for_odt(const TrajectoryBuffer& buffer,
                                                   std::size_t batch, std::size_t context,
                                                   double gamma, std::uint64_t rng_seed) {
  if (context == 0) throw std::invalid_argument("sample_subsequences_for_odt: K must be positive");
  const auto entries = buffer.snapshot();
  std::vector<double> weights;
  for (const auto& e : entries) weights.push_back(static_cast<double>(e->length()));
  double total = 0.0;
  for (double w : weights) total += w;
  if (entries.empty() || total == 0.0) {
    throw std::invalid_argument("sample_subsequences_for_odt: buffer is empty");
  }
  std::mt19937_64 rng(rng_seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<std::vector<double>> rtg_cache(entries.size());
  std::vector<OdtSample> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t idx = pick(rng);
    const Trajectory& t = *entries[idx];
    if (rtg_cache[idx].empty()) rtg_cache[idx] = compute_rtg(t.rewards, gamma);
    const std::size_t count = std::min(context, t.length());
    const std::size_t start =
        std::uniform_int_distribution<std::size_t>(0, t.length() - count)(rng);
    out.push_back({make_token_sequence(t, rtg_cache[idx], start, count, context), idx, start,
                   entries[idx]});
  }
  return out;
}

}  // namespace dodt::replay
