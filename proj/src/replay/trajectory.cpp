#include "dodt/replay/trajectory.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dodt::replay {

namespace {
std::atomic<std::uint64_t> g_stamp{0};

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t line,
                              const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

const char* source_name(Source s) {
  switch (s) {
    case Source::kDreamer: return "dreamer";
    case Source::kOdt: return "odt";
    case Source::kOffline: return "offline";
  }
  return "?";
}

std::uint64_t next_creation_stamp() { return ++g_stamp; }

double sum_rewards(std::span<const double> rewards) {
  double total = 0.0;
  for (double r : rewards) total += r;
  return total;
}

void Trajectory::validate() const {
  if (observations.size() != actions.size() + 1 ||
      rewards.size() != actions.size()) {
    throw std::invalid_argument(
        "trajectory: expected |observations| == |actions| + 1 == |rewards| + 1, got " +
        std::to_string(observations.size()) + ", " + std::to_string(actions.size()) +
        ", " + std::to_string(rewards.size()));
  }
  const std::size_t od = observations.front().size();
  for (const auto& o : observations) {
    if (o.size() != od) throw std::invalid_argument("trajectory: ragged observations");
  }
  if (!actions.empty()) {
    const std::size_t ad = actions.front().size();
    for (const auto& a : actions) {
      if (a.size() != ad) throw std::invalid_argument("trajectory: ragged actions");
    }
  }
  if (total_return != sum_rewards(rewards)) {
    throw std::invalid_argument("trajectory: total_return does not equal sum of rewards");
  }
}

Trajectory Trajectory::make(std::vector<std::vector<double>> observations,
                            std::vector<std::vector<double>> actions,
                            std::vector<double> rewards, Source source) {
  Trajectory t;
  t.observations = std::move(observations);
  t.actions = std::move(actions);
  t.rewards = std::move(rewards);
  t.total_return = sum_rewards(t.rewards);
  t.source = source;
  t.created_at = next_creation_stamp();
  t.validate();
  return t;
}

std::vector<double> compute_rtg(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

void save_trajectories(const std::filesystem::path& path,
                       std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("save_trajectories: nothing to save");
  const std::size_t od = trajectories.front().obs_dim();
  const std::size_t ad = trajectories.front().act_dim();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "dodt-traj v1 obs_dim=" << od << " act_dim=" << ad << '\n';
  for (const Trajectory& t : trajectories) {
    t.validate();
    if (t.obs_dim() != od || (t.length() > 0 && t.act_dim() != ad)) {
      throw std::invalid_argument("save_trajectories: mixed dimensions");
    }
    out << t.length() << '\n';
    for (std::size_t i = 0; i < t.length(); ++i) {
      std::string row;
      for (double v : t.observations[i]) row += fmt(v) + ' ';
      for (double v : t.actions[i]) row += fmt(v) + ' ';
      row += fmt(t.rewards[i]);
      out << row << '\n';
    }
    std::string last;
    for (std::size_t j = 0; j < od; ++j) {
      if (j) last += ' ';
      last += fmt(t.observations.back()[j]);
    }
    out << last << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path,
                                          Source source) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) parse_error(path, lineno, "empty file");
  std::size_t od = 0, ad = 0;
  {
    std::istringstream hs(line);
    std::string magic, version, o, a;
    hs >> magic >> version >> o >> a;
    if (magic != "dodt-traj" || version != "v1" || o.rfind("obs_dim=", 0) != 0 ||
        a.rfind("act_dim=", 0) != 0) {
      parse_error(path, lineno, "expected header 'dodt-traj v1 obs_dim=<d> act_dim=<d>'");
    }
    od = std::stoul(o.substr(8));
    ad = std::stoul(a.substr(8));
    if (od == 0) parse_error(path, lineno, "obs_dim must be positive");
  }

  auto read_row = [&](std::size_t expected) {
    if (!std::getline(in, line)) parse_error(path, lineno + 1, "unexpected end of file");
    ++lineno;
    std::istringstream rs(line);
    std::vector<double> row;
    std::string tok;
    while (rs >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        parse_error(path, lineno, "bad number '" + tok + "'");
      }
    }
    if (row.size() != expected) {
      parse_error(path, lineno, "expected " + std::to_string(expected) + " values, got " +
                                    std::to_string(row.size()));
    }
    return row;
  };

  std::vector<Trajectory> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t len = 0;
    try {
      len = std::stoul(line);
    } catch (const std::exception&) {
      parse_error(path, lineno, "expected trajectory length");
    }
    std::vector<std::vector<double>> obs, acts;
    std::vector<double> rews;
    for (std::size_t t = 0; t < len; ++t) {
      const auto row = read_row(od + ad + 1);
      obs.emplace_back(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(od));
      acts.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(od),
                        row.begin() + static_cast<std::ptrdiff_t>(od + ad));
      rews.push_back(row.back());
    }
    obs.push_back(read_row(od));
    out.push_back(Trajectory::make(std::move(obs), std::move(acts), std::move(rews), source));
  }
  return out;
}

}  // namespace dodt::replay
