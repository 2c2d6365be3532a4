#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dodt/trainer/trainer.hpp"

using namespace dodt;
using namespace dodt::trainer;

namespace {

DodtConfig tiny_config(const std::string& env = "pendulum") {
  DodtConfig c;
  c.env = env;
  c.rounds = 3;
  c.buffer_capacity = 50;
  c.dreamer_steps = 60;
  c.eval_episodes = 1;
  auto& d = c.dreamer;
  d.model.deter = 8;
  d.model.stoch = 4;
  d.model.hidden = 16;
  d.model.embed = 8;
  d.actor_hidden = {16};
  d.value_hidden = {16};
  d.horizon = 4;
  d.train_steps = 3;
  d.seq_len = 8;
  d.batch = 4;
  d.seed_episodes = 1;
  d.imagine_starts = 8;
  auto& o = c.odt;
  o.model.context = 4;
  o.model.width = 8;
  o.model.layers = 1;
  o.model.heads = 1;
  o.model.max_timestep = 256;
  o.model.rtg_scale = 100.0;
  o.iterations = 3;
  o.batch = 4;
  return c;
}

std::vector<std::vector<double>> snapshot(const nn::ParamList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

std::vector<RoundReport> run_all(DodtRun& run) {
  std::vector<RoundReport> out;
  while (auto r = run.run_round()) out.push_back(*r);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dodt_trainer_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// Rows of a metrics CSV as strings, header excluded.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

ExperimentOptions to(const std::filesystem::path& dir) {
  ExperimentOptions o;
  o.out_dir = dir;
  return o;
}

replay::Trajectory tagged(replay::Source source, double ret) {
  return replay::Trajectory::make({{0.0}, {0.0}}, {{0.0}}, {ret}, source);
}

}  // namespace

TEST_CASE("metrics header matches the published schema") {
  CHECK(std::string(kMetricsHeader) ==
        "round,env_steps_total,dreamer_return,odt_eval_mean,odt_eval_std,benefited_count,"
        "wm_recon,wm_kl,wm_reward,actor_loss,value_loss,odt_nll,odt_entropy,wall_clock_s");
  CHECK(metric_columns().size() == 14);
}

TEST_CASE("one round with zero learning rates changes buffers but no parameters") {
  DodtConfig c = tiny_config();
  c.rounds = 1;
  c.dreamer.model_optim.lr = c.dreamer.actor_optim.lr = c.dreamer.value_optim.lr = 0.0;
  c.odt.optim.lr = 0.0;
  DodtRun run(c, Algo::kDodt, 1);
  const auto wm = snapshot(run.dreamer()->world_parameters());
  const auto actor = snapshot(run.dreamer()->actor_parameters());
  const auto value = snapshot(run.dreamer()->value_parameters());
  const auto odt = snapshot(run.odt()->parameters());
  const auto report = run.run_round();
  REQUIRE(report);
  CHECK(run.buffer().size() == 2);
  CHECK(run.dreamer()->dataset().size() == 1);
  CHECK(report->losses.contains("wm_recon"));
  CHECK(report->losses.contains("odt_nll"));
  CHECK(snapshot(run.dreamer()->world_parameters()) == wm);
  CHECK(snapshot(run.dreamer()->actor_parameters()) == actor);
  CHECK(snapshot(run.dreamer()->value_parameters()) == value);
  CHECK(snapshot(run.odt()->parameters()) == odt);
  CHECK_FALSE(run.run_round());
}

TEST_CASE("transfer_policy none keeps Dreamer trajectories out of the replay buffer") {
  DodtConfig c = tiny_config();
  c.transfer = TransferPolicy::kNone;
  DodtRun run(c, Algo::kDodt, 2);
  for (const auto& r : run_all(run)) {
    CHECK(r.buffer_dreamer_entries == 0);
    CHECK(r.benefited_count == std::size_t{0});
  }
  for (const auto& t : run.buffer().snapshot()) CHECK(t->source == replay::Source::kOdt);
  CHECK(run.dreamer()->dataset().size() > 0);
}

TEST_CASE("env_steps_total grows by T plus the ODT trajectory length each round") {
  DodtConfig c = tiny_config("chain");
  c.dreamer_steps = 30;
  c.dreamer.seq_len = 2;
  c.rounds = 4;
  c.odt.model.max_timestep = 32;
  DodtRun run(c, Algo::kDodt, 3);
  const auto reports = run_all(run);
  REQUIRE(reports.size() == 4);
  // The buffer never fills, so the ODT trajectories are its source=odt
  // entries in creation order.
  auto entries = run.buffer().snapshot();
  std::vector<replay::TrajectoryPtr> odt;
  for (const auto& t : entries)
    if (t->source == replay::Source::kOdt) odt.push_back(t);
  std::sort(odt.begin(), odt.end(),
            [](const auto& a, const auto& b) { return a->created_at < b->created_at; });
  REQUIRE(odt.size() == 4);
  std::uint64_t expected = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    expected += c.dreamer_steps + odt[i]->length();
    CHECK(reports[i].env_steps_total == expected);
  }
}

TEST_CASE("count_benefited examples") {
  replay::TrajectoryBuffer buffer(20, replay::EvictionPolicy::kLowestReward);
  for (int i = 0; i < 5; ++i) buffer.insert(tagged(replay::Source::kOdt, i));
  std::set<std::uint64_t> all;
  for (const auto& t : buffer.snapshot()) all.insert(t->created_at);
  CHECK(count_benefited(buffer, all) == 0);

  replay::TrajectoryBuffer dreamer_only(20, replay::EvictionPolicy::kLowestReward);
  for (int i = 0; i < 10; ++i) dreamer_only.insert(tagged(replay::Source::kDreamer, i));
  std::set<std::uint64_t> seven;
  for (const auto& t : dreamer_only.snapshot()) {
    if (seven.size() < 7) seven.insert(t->created_at);
  }
  CHECK(count_benefited(dreamer_only, seven) == 7);
}

TEST_CASE("count_benefited matches brute-force set intersection on a random fixture") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    replay::TrajectoryBuffer buffer(50, replay::EvictionPolicy::kOldest);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < 50; ++i) {
      buffer.insert(tagged(coin(rng) ? replay::Source::kDreamer : replay::Source::kOdt, i));
    }
    const auto samples = replay::sample_subsequences_for_odt(buffer, 30, 1, 1.0, rng());
    std::set<std::uint64_t> log;
    for (const auto& s : samples) log.insert(s.trajectory->created_at);
    std::size_t brute = 0;
    for (const auto& t : buffer.snapshot()) {
      bool used = false;
      for (const auto& s : samples) used |= s.trajectory.get() == t.get();
      if (used && t->source == replay::Source::kDreamer) ++brute;
    }
    CHECK(count_benefited(buffer, log) == brute);
  }
}

TEST_CASE("dodt rounds keep the buffer bounded, evict the minimum and pass the audits") {
  DodtConfig c = tiny_config();
  c.buffer_capacity = 3;
  c.rounds = 4;
  DodtRun run(c, Algo::kDodt, 5);
  for (const auto& r : run_all(run)) {
    CHECK(r.buffer_size <= c.buffer_capacity);
    REQUIRE(r.benefited_count);
    CHECK(*r.benefited_count <= c.buffer_capacity);
    CHECK(*r.benefited_count <= r.buffer_dreamer_entries);
    CHECK(r.dreamer_buffer_accesses == 0);
    CHECK(r.odt_dataset_writes == 0);
    CHECK(r.imagine_env_calls == 0);
  }
  REQUIRE_FALSE(run.evictions().empty());
  for (const auto& e : run.evictions()) {
    for (const auto& c : e.candidates) CHECK(e.evicted->total_return <= c->total_return);
  }
  CHECK(run.dreamer()->imagine_calls() > 0);
}

TEST_CASE("odt mode runs without Dreamer and evicts oldest first") {
  DodtConfig c = tiny_config();
  c.buffer_capacity = 2;
  DodtRun run(c, Algo::kOdt, 6);
  CHECK(run.dreamer() == nullptr);
  CHECK(run.buffer().policy() == replay::EvictionPolicy::kOldest);
  for (const auto& r : run_all(run)) {
    CHECK_FALSE(r.dreamer_return);
    CHECK_FALSE(r.losses.contains("wm_recon"));
    CHECK(r.odt_eval_mean);
  }
  for (const auto& e : run.evictions()) {
    for (const auto& c : e.candidates) CHECK(e.evicted->created_at <= c->created_at);
  }
}

TEST_CASE("dreamer mode leaves the replay buffer empty and reports no ODT metrics") {
  DodtConfig c = tiny_config();
  DodtRun run(c, Algo::kDreamer, 7);
  CHECK(run.odt() == nullptr);
  for (const auto& r : run_all(run)) {
    CHECK(r.dreamer_return);
    CHECK_FALSE(r.odt_eval_mean);
    CHECK_FALSE(r.benefited_count);
    CHECK(r.dreamer_buffer_accesses == 0);
  }
  CHECK(run.buffer().size() == 0);
  CHECK(run.buffer().write_count() == 0);
}

TEST_CASE("isolation: dodt without Dreamer interaction or transfer reproduces odt metrics") {
  DodtConfig c = tiny_config();
  c.transfer = TransferPolicy::kNone;
  c.dreamer_interaction = false;
  DodtRun a(c, Algo::kDodt, 8);
  DodtRun b(c, Algo::kOdt, 8);
  const auto ra = run_all(a), rb = run_all(b);
  REQUIRE(ra.size() == rb.size());
  std::ostringstream ca, cb;
  write_metrics(ca, ra, false);
  write_metrics(cb, rb, false);
  CHECK(ca.str() == cb.str());
}

TEST_CASE("env-step budget stops the run exactly on the budget") {
  DodtConfig c = tiny_config();
  c.rounds = 100;
  c.env_step_budget = 500;
  DodtRun run(c, Algo::kDodt, 9);
  const auto reports = run_all(run);
  REQUIRE_FALSE(reports.empty());
  CHECK(reports.back().env_steps_total == 500);
  for (std::size_t i = 1; i < reports.size(); ++i) {
    CHECK(reports[i].env_steps_total > reports[i - 1].env_steps_total);
  }
}

TEST_CASE("phase failures name the round and phase") {
  DodtConfig c = tiny_config();
  c.odt.model.max_timestep = 10;
  DodtRun run(c, Algo::kOdt, 10);
  try {
    run.run_round();
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("round 1, ODT phase") != std::string::npos);
  }
}

TEST_CASE("offline trajectories seed the replay buffer with the top returns") {
  const auto dir = scratch_dir("offline");
  std::filesystem::create_directories(dir);
  std::vector<replay::Trajectory> offline;
  env::Pendulum env;
  for (int e = 0; e < 5; ++e) {
    std::vector<std::vector<double>> obs{env.reset(e)}, acts;
    std::vector<double> rews;
    for (int t = 0; t < 10; ++t) {
      acts.push_back({0.1 * e});
      const auto r = env.step(acts.back());
      obs.push_back(r.observation);
      rews.push_back(r.reward);
    }
    offline.push_back(replay::Trajectory::make(obs, acts, rews, replay::Source::kOffline));
  }
  replay::save_trajectories(dir / "offline.txt", offline);
  DodtConfig c = tiny_config();
  c.buffer_capacity = 3;
  c.offline_path = (dir / "offline.txt").string();
  DodtRun run(c, Algo::kOdt, 11);
  std::vector<double> expect;
  for (const auto& t : offline) expect.push_back(t.total_return);
  std::sort(expect.rbegin(), expect.rend());
  expect.resize(3);
  std::vector<double> got;
  for (const auto& t : run.buffer().snapshot()) got.push_back(t->total_return);
  std::sort(got.rbegin(), got.rend());
  CHECK(got == expect);
}

TEST_CASE("run_experiment: odt metrics carry no Dreamer columns") {
  const auto dir = scratch_dir("odt_cols");
  DodtConfig c = tiny_config();
  c.rounds = 2;
  run_experiment(c, Algo::kOdt, {0}, to(dir));
  const auto rows = read_csv(dir / "metrics_seed0.csv");
  REQUIRE(rows.size() == 2);
  const auto cols = metric_columns();
  for (const auto& row : rows) {
    REQUIRE(row.size() == cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const bool dreamer_col = cols[i] == "dreamer_return" || cols[i].starts_with("wm_") ||
                               cols[i] == "actor_loss" || cols[i] == "value_loss";
      if (dreamer_col || cols[i] == "wall_clock_s") CHECK(row[i].empty());
      if (cols[i] == "odt_eval_mean") CHECK_FALSE(row[i].empty());
    }
  }
}

TEST_CASE("run_experiment is deterministic and its summary medians match the per-seed files") {
  DodtConfig c = tiny_config();
  c.rounds = 2;
  const auto d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  run_experiment(c, Algo::kDodt, seeds, to(d1));
  run_experiment(c, Algo::kDodt, seeds, to(d2));
  for (auto s : seeds) {
    const auto name = "metrics_seed" + std::to_string(s) + ".csv";
    CHECK(slurp(d1 / name) == slurp(d2 / name));
  }
  CHECK(slurp(d1 / "summary.csv") == slurp(d2 / "summary.csv"));

  // Recompute the medians from the artifacts alone.
  const auto cols = metric_columns();
  const std::size_t mean_col =
      std::find(cols.begin(), cols.end(), "odt_eval_mean") - cols.begin();
  const auto summary = read_csv(d1 / "summary.csv");
  REQUIRE(summary.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<double> v;
    for (auto s : seeds) {
      v.push_back(std::stod(read_csv(d1 / ("metrics_seed" + std::to_string(s) + ".csv"))[r][mean_col]));
    }
    std::sort(v.begin(), v.end());
    CHECK(std::stod(summary[r][mean_col]) == doctest::Approx(v[1]).epsilon(1e-15));
  }
}

TEST_CASE("median and steps_to_threshold") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK_THROWS(median({}));
  std::vector<RoundReport> rounds(3);
  rounds[0].env_steps_total = 100;
  rounds[0].odt_eval_mean = -900.0;
  rounds[1].env_steps_total = 200;
  rounds[1].odt_eval_mean = -250.0;
  rounds[2].env_steps_total = 300;
  rounds[2].odt_eval_mean = -100.0;
  CHECK(steps_to_threshold(rounds, -300.0) == std::uint64_t{200});
  CHECK_FALSE(steps_to_threshold(rounds, 0.0));
}
