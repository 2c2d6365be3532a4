#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include "dodt/replay/buffer.hpp"
#include "dodt/replay/trajectory.hpp"

using namespace dodt::replay;

namespace {

// Trajectory of `len` steps whose rewards sum to `ret` (all on the last step).
Trajectory with_return(double ret, std::size_t len = 3, Source src = Source::kOffline) {
  std::vector<std::vector<double>> obs, acts;
  std::vector<double> rews(len, 0.0);
  for (std::size_t t = 0; t <= len; ++t) obs.push_back({static_cast<double>(t), ret});
  for (std::size_t t = 0; t < len; ++t) acts.push_back({0.1 * static_cast<double>(t)});
  rews.back() = ret;
  return Trajectory::make(std::move(obs), std::move(acts), std::move(rews), src);
}

std::multiset<double> returns(const TrajectoryBuffer& b) {
  std::multiset<double> out;
  for (const auto& e : b.snapshot()) out.insert(e->total_return);
  return out;
}

// Pearson chi-square statistic against expected counts.
double chi_square(const std::vector<double>& observed, const std::vector<double>& expected) {
  double chi = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    chi += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  return chi;
}

// Chi-square critical value at p = 0.001 with one degree of freedom.
constexpr double kChi1 = 10.828;

}  // namespace

TEST_CASE("compute_rtg examples") {
  CHECK(compute_rtg(std::vector<double>{1, 2, 3}, 1.0) == std::vector<double>{6, 5, 3});
  CHECK(compute_rtg(std::vector<double>{-2.5}, 0.3) == std::vector<double>{-2.5});
  CHECK(compute_rtg(std::vector<double>{}, 0.9).empty());
  const auto g = compute_rtg(std::vector<double>{1, 1, 1, 1}, 0.5);
  const std::vector<double> want{1.875, 1.75, 1.5, 1.0};
  CHECK(g == want);
}

TEST_CASE("compute_rtg satisfies the backward recursion") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  std::uniform_real_distribution<double> gam(0.01, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(1 + trial % 17);
    for (auto& v : r) v = n(rng);
    const double gamma = gam(rng);
    const auto g = compute_rtg(r, gamma);
    REQUIRE(g.size() == r.size());
    for (std::size_t t = 0; t + 1 < r.size(); ++t) {
      CHECK(g[t] - gamma * g[t + 1] == doctest::Approx(r[t]).epsilon(1e-12));
    }
    CHECK(g.back() == r.back());
  }
}

TEST_CASE("trajectory invariants") {
  const auto t = with_return(4.5, 5);
  CHECK(t.total_return == 4.5);
  CHECK(t.observations.size() == t.actions.size() + 1);
  Trajectory bad = t;
  bad.rewards.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  Trajectory wrong = t;
  wrong.total_return += 1.0;
  CHECK_THROWS_AS(wrong.validate(), std::invalid_argument);
  const auto earlier = with_return(1.0);
  const auto later = with_return(1.0);
  CHECK(earlier.created_at < later.created_at);
}

TEST_CASE("lowest_reward eviction drops the lowest return") {
  TrajectoryBuffer b(2, EvictionPolicy::kLowestReward);
  b.insert(with_return(1.0));
  b.insert(with_return(3.0));
  const auto evicted = b.insert(with_return(2.0));
  REQUIRE(evicted);
  CHECK(evicted->total_return == 1.0);
  CHECK(returns(b) == std::multiset<double>{2.0, 3.0});
}

TEST_CASE("oldest eviction drops the smallest created_at") {
  TrajectoryBuffer b(2, EvictionPolicy::kOldest);
  auto first = with_return(1.0);
  auto second = with_return(3.0);
  // Insertion order differs from creation order.
  std::swap(first.created_at, second.created_at);
  b.insert(first);
  b.insert(second);
  const auto evicted = b.insert(with_return(2.0));
  REQUIRE(evicted);
  CHECK(evicted->total_return == 3.0);
}

TEST_CASE("lowest_reward ties break toward the smaller created_at") {
  TrajectoryBuffer b(2, EvictionPolicy::kLowestReward);
  const auto a = with_return(1.0);
  const auto c = with_return(1.0);
  b.insert(c);
  b.insert(a);
  const auto evicted = b.insert(with_return(5.0));
  REQUIRE(evicted);
  CHECK(evicted->created_at == a.created_at);
}

TEST_CASE("1000 increasing inserts into a capacity-10 buffer keep 991..1000") {
  TrajectoryBuffer b(10, EvictionPolicy::kLowestReward);
  for (int r = 1; r <= 1000; ++r) b.insert(with_return(r, 1));
  std::multiset<double> want;
  for (int r = 991; r <= 1000; ++r) want.insert(r);
  CHECK(returns(b) == want);
}

TEST_CASE("lowest_reward retains exactly the top-N of all inserted returns") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> coarse(-20, 20);  // plenty of ties
  for (std::size_t cap : {1u, 3u, 10u, 64u}) {
    TrajectoryBuffer b(cap, EvictionPolicy::kLowestReward);
    std::vector<double> all;
    double prev_min = -1e300;
    for (int i = 0; i < 1000; ++i) {
      const double r = coarse(rng) * 0.5;
      all.push_back(r);
      b.insert(with_return(r, 1));
      CHECK(b.size() <= cap);
      std::sort(all.begin(), all.end(), std::greater<>());
      const std::multiset<double> top(all.begin(),
                                      all.begin() + static_cast<std::ptrdiff_t>(
                                                        std::min(cap, all.size())));
      CHECK(returns(b) == top);
      if (b.size() == cap) {
        const double m = *returns(b).begin();
        CHECK(m >= prev_min);
        prev_min = m;
      }
    }
  }
}

TEST_CASE("seed_from_offline keeps the top-N") {
  std::vector<Trajectory> off{with_return(5), with_return(1), with_return(9)};
  TrajectoryBuffer b(10, EvictionPolicy::kLowestReward);
  b.seed_from_offline(off, 2);
  CHECK(returns(b) == std::multiset<double>{9, 5});
  b.seed_from_offline(off, 7);
  CHECK(returns(b) == std::multiset<double>{1, 5, 9});

  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0, 10);
  std::vector<Trajectory> many;
  std::vector<double> rs;
  for (int i = 0; i < 100; ++i) {
    rs.push_back(n(rng));
    many.push_back(with_return(rs.back()));
  }
  std::sort(rs.begin(), rs.end(), std::greater<>());
  b.seed_from_offline(many, 10);
  CHECK(returns(b) == std::multiset<double>(rs.begin(), rs.begin() + 10));
  CHECK_THROWS_AS(b.seed_from_offline(std::vector<Trajectory>{}, 3), std::invalid_argument);
}

TEST_CASE("sample_sequences: single valid window, cardinality, boundaries") {
  SequenceDataset d;
  d.add(with_return(1.0, 4));
  const auto one = d.sample_sequences(3, 4, 0);
  CHECK(one.origins.size() == 3);
  for (const auto& [ep, start] : one.origins) {
    CHECK(ep == 0);
    CHECK(start == 0);
  }
  CHECK(one.rewards.size() == 12);
  CHECK_THROWS_WITH_AS(d.sample_sequences(1, 5, 0), doctest::Contains("length >= 5"),
                       std::invalid_argument);

  d.add(with_return(2.0, 9));
  d.add(with_return(3.0, 2));
  CHECK(d.total_steps() == 15);
  const auto many = d.sample_sequences(500, 3, 7);
  for (std::size_t b = 0; b < many.batch; ++b) {
    const auto [ep, start] = many.origins[b];
    const auto& e = d.episodes()[ep];
    REQUIRE(start + 3 <= e.length());
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(many.rewards[b * 3 + t] == e.rewards[start + t]);
      CHECK(many.observations[(b * 3 + t) * 2] == e.observations[start + t][0]);
    }
  }
  CHECK(d.sample_sequences(5, 3, 11).origins == d.sample_sequences(5, 3, 11).origins);
}

TEST_CASE("sample_sequences start index is uniform over valid windows") {
  const std::size_t L = 6;
  SequenceDataset d;
  d.add(with_return(0.0, L + 1));
  const auto s = d.sample_sequences(10000, L, 2024);
  std::vector<double> counts(2, 0.0);
  for (const auto& o : s.origins) counts.at(o.second) += 1.0;
  CHECK(chi_square(counts, {5000.0, 5000.0}) < kChi1);

  // Across episodes: windows are uniform over all (episode, start) pairs.
  SequenceDataset d2;
  d2.add(with_return(0.0, 3));  // 1 window of length 3
  d2.add(with_return(0.0, 5));  // 3 windows
  const auto s2 = d2.sample_sequences(8000, 3, 5);
  std::map<std::pair<std::size_t, std::size_t>, double> hist;
  for (const auto& o : s2.origins) hist[o] += 1.0;
  CHECK(hist.size() == 4);
  std::vector<double> obs;
  for (const auto& [k, v] : hist) obs.push_back(v);
  const double chi = chi_square(obs, std::vector<double>(4, 2000.0));
  CHECK(chi < 16.266);  // 3 dof, p = 0.001
}

TEST_CASE("odt subsequences: whole short trajectory and RTG of the first token") {
  TrajectoryBuffer b(4, EvictionPolicy::kOldest);
  std::vector<std::vector<double>> obs{{0}, {1}, {2}, {3}, {4}, {5}};
  std::vector<std::vector<double>> acts{{0}, {0}, {0}, {0}, {0}};
  auto t = Trajectory::make(obs, acts, {1, 2, 3, 4, 5}, Source::kOdt);
  b.insert(t);
  const auto s = sample_subsequences_for_odt(b, 4, 10, 1.0, 1);
  for (const auto& x : s) {
    x.sequence.validate();
    CHECK(x.sequence.valid_len == 5);
    CHECK(x.sequence.pad() == 5);
    CHECK(x.sequence.rtg[5] == 15.0);
    CHECK(x.sequence.timesteps[5] == 0);
    CHECK(x.sequence.timesteps[9] == 4);
    CHECK(x.sequence.observations[9][0] == 4.0);
    for (std::size_t i = 0; i < 5; ++i) CHECK(x.sequence.rtg[i] == 0.0);
  }
  const auto discounted = sample_subsequences_for_odt(b, 1, 10, 0.5, 1);
  CHECK(discounted[0].sequence.rtg[5] == compute_rtg(t.rewards, 0.5)[0]);
}

TEST_CASE("odt subsequences sample trajectories proportionally to length") {
  TrajectoryBuffer b(4, EvictionPolicy::kOldest);
  b.insert(with_return(0.0, 10));
  b.insert(with_return(0.0, 30));
  const auto s = sample_subsequences_for_odt(b, 10000, 4, 1.0, 77);
  std::vector<double> counts(2, 0.0);
  for (const auto& x : s) {
    counts[x.entry] += 1.0;
    CHECK(x.sequence.valid_len == 4);
    CHECK(x.start + 4 <= (x.entry == 0 ? 10u : 30u));
  }
  CHECK(chi_square(counts, {2500.0, 7500.0}) < kChi1);
  CHECK_THROWS_AS(
      sample_subsequences_for_odt(TrajectoryBuffer(2, EvictionPolicy::kOldest), 1, 4, 1.0, 0),
      std::invalid_argument);
}

TEST_CASE("snapshots stay consistent under a concurrent writer") {
  TrajectoryBuffer b(8, EvictionPolicy::kLowestReward);
  for (int i = 0; i < 8; ++i) b.insert(with_return(i, 2));
  std::thread writer([&] {
    for (int i = 8; i < 400; ++i) b.insert(with_return(i, 2));
  });
  for (int i = 0; i < 400; ++i) {
    const auto snap = b.snapshot();
    CHECK(snap.size() == 8);
    for (const auto& e : snap) CHECK_NOTHROW(e->validate());
  }
  writer.join();
  CHECK(*returns(b).begin() == 392.0);
}

TEST_CASE("trajectory file round-trips exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "dodt_replay_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "traj.txt";
  std::vector<Trajectory> ts{with_return(0.1, 4), with_return(-1.0 / 3.0, 1)};
  ts[0].observations[2][1] = 1e-300;
  ts[0].total_return = sum_rewards(ts[0].rewards);
  save_trajectories(path, ts);
  const auto back = load_trajectories(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].observations == ts[i].observations);
    CHECK(back[i].actions == ts[i].actions);
    CHECK(back[i].rewards == ts[i].rewards);
    CHECK(back[i].total_return == ts[i].total_return);
  }
}

TEST_CASE("malformed trajectory files report the line") {
  const auto path = std::filesystem::temp_directory_path() / "dodt_bad_traj.txt";
  {
    std::ofstream out(path);
    out << "dodt-traj v1 obs_dim=1 act_dim=1\n2\n0 0 1\n1 x 1\n2\n";
  }
  CHECK_THROWS_WITH(load_trajectories(path), doctest::Contains(":4: bad number 'x'"));
  {
    std::ofstream out(path);
    out << "not-a-header\n";
  }
  CHECK_THROWS_WITH(load_trajectories(path), doctest::Contains(":1: expected header"));
}
