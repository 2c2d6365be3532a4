#include "dodt/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <concepts>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace dodt::cli {

namespace {

using trainer::Algo;
using trainer::TransferPolicy;
using world::BehaviorVariant;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Value codecs. parse() throws std::invalid_argument with the expected form.

std::uint64_t parse_unsigned(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer");
  }
  return out;
}

template <std::integral T>
  requires(!std::is_same_v<T, bool>)
std::string format(T v) {
  return std::to_string(v);
}
// Shortest form that reads back to the same double.
std::string format(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::string& v) { return v; }
std::string format(Algo v) { return trainer::algo_name(v); }
std::string format(TransferPolicy v) { return trainer::transfer_name(v); }
std::string format(BehaviorVariant v) {
  return v == BehaviorVariant::kStandard ? "standard" : "literal";
}
template <typename T>
std::string format(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <std::unsigned_integral T>
void parse(const std::string& v, T& out) {
  out = static_cast<T>(parse_unsigned(v));
}
void parse(const std::string& v, int& out) {
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected an integer");
  }
}
void parse(const std::string& v, double& out) {
  double d = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a number");
  }
  out = d;
}
void parse(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") {
    out = true;
  } else if (v == "false" || v == "0" || v == "no") {
    out = false;
  } else {
    throw std::invalid_argument("expected true or false");
  }
}
void parse(const std::string& v, std::string& out) { out = v; }
void parse(const std::string& v, Algo& out) {
  const auto a = trainer::algo_from_name(v);
  if (!a) throw std::invalid_argument("expected odt, dreamer or dodt");
  out = *a;
}
void parse(const std::string& v, TransferPolicy& out) {
  const auto p = trainer::transfer_from_name(v);
  if (!p) throw std::invalid_argument("expected real_env_trajectories or none");
  out = *p;
}
void parse(const std::string& v, BehaviorVariant& out) {
  if (v == "standard") {
    out = BehaviorVariant::kStandard;
  } else if (v == "literal") {
    out = BehaviorVariant::kLiteral;
  } else {
    throw std::invalid_argument("expected standard or literal");
  }
}
template <typename T>
void parse(const std::string& v, std::vector<T>& out) {
  out.clear();
  if (v.empty()) return;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<T>(parse_unsigned(trim(item))));
}

struct Field {
  FieldInfo info;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// `access` is a generic lambda returning a reference to the member for both
// const and mutable configs.
template <typename Access>
Field field(std::string section, std::string key, std::string doc, Access access) {
  return {{std::move(section), std::move(key), std::move(doc), ""},
          [access](const RunConfig& c) { return format(access(c)); },
          [access](RunConfig& c, const std::string& v) { parse(v, access(c)); }};
}

#define DODT_FIELD(section, key, doc, expr) \
  field(section, key, doc, [](auto& c) -> auto& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // [run]
    f.push_back(DODT_FIELD("run", "env", "environment: pendulum, point_reach or chain", c.dodt.env));
    f.push_back(DODT_FIELD("run", "algo", "odt, dreamer or dodt (overridden by --algo)", c.algo));
    f.push_back(DODT_FIELD("run", "seeds", "comma-separated seeds (overridden by --seed / DODT_SEED)", c.seeds));
    f.push_back(DODT_FIELD("run", "out_dir", "output directory (overridden by --out)", c.out_dir));
    f.push_back(DODT_FIELD("run", "rounds", "R, training rounds", c.dodt.rounds));
    f.push_back(DODT_FIELD("run", "buffer_capacity", "N, replay buffer capacity", c.dodt.buffer_capacity));
    f.push_back(DODT_FIELD("run", "dreamer_steps", "T, env steps Dreamer collects per round", c.dodt.dreamer_steps));
    f.push_back(DODT_FIELD("run", "eval_episodes", "evaluation episodes per round", c.dodt.eval_episodes));
    f.push_back(DODT_FIELD("run", "env_step_budget", "stop after this many env steps; 0 = no limit", c.dodt.env_step_budget));
    f.push_back(DODT_FIELD("run", "transfer", "real_env_trajectories or none", c.dodt.transfer));
    f.push_back(DODT_FIELD("run", "dreamer_interaction", "let the Dreamer phase collect and train", c.dodt.dreamer_interaction));
    f.push_back(DODT_FIELD("run", "offline_path", "trajectory file seeding the replay buffer; empty = none", c.dodt.offline_path));
    f.push_back(DODT_FIELD("run", "gamma", "discount for value learning and the actor objective", c.dodt.dreamer.gamma));
    f.push_back(DODT_FIELD("run", "wall_clock", "write wall_clock_s to metrics (breaks byte-reproducibility)", c.wall_clock));
    f.push_back(DODT_FIELD("run", "init_odt_checkpoint", "ODT checkpoint directory to start from; empty = random init", c.init_odt_checkpoint));
    f.push_back(DODT_FIELD("run", "init_dreamer_checkpoint", "Dreamer checkpoint directory to start from; empty = random init", c.init_dreamer_checkpoint));
    // [world_model]
    f.push_back(DODT_FIELD("world_model", "deter", "recurrent state size", c.dodt.dreamer.model.deter));
    f.push_back(DODT_FIELD("world_model", "stoch", "stochastic state size", c.dodt.dreamer.model.stoch));
    f.push_back(DODT_FIELD("world_model", "hidden", "hidden width of the heads", c.dodt.dreamer.model.hidden));
    f.push_back(DODT_FIELD("world_model", "embed", "observation embedding size", c.dodt.dreamer.model.embed));
    f.push_back(DODT_FIELD("world_model", "min_std", "lower bound added to latent std", c.dodt.dreamer.model.min_std));
    f.push_back(DODT_FIELD("world_model", "free_nats", "KL floor", c.dodt.dreamer.model.free_nats));
    f.push_back(DODT_FIELD("world_model", "lr", "Adam learning rate", c.dodt.dreamer.model_optim.lr));
    f.push_back(DODT_FIELD("world_model", "clip_norm", "global gradient-norm clip; 0 = off", c.dodt.dreamer.model_optim.clip_norm));
    // [dreamer]
    f.push_back(DODT_FIELD("dreamer", "horizon", "H, imagination horizon", c.dodt.dreamer.horizon));
    f.push_back(DODT_FIELD("dreamer", "train_steps", "C, updates per round", c.dodt.dreamer.train_steps));
    f.push_back(DODT_FIELD("dreamer", "seq_len", "L, training sequence length", c.dodt.dreamer.seq_len));
    f.push_back(DODT_FIELD("dreamer", "batch", "B, sequences per update", c.dodt.dreamer.batch));
    f.push_back(DODT_FIELD("dreamer", "seed_episodes", "S, random-action episodes before acting", c.dodt.dreamer.seed_episodes));
    f.push_back(DODT_FIELD("dreamer", "imagine_starts", "posterior states imagined from per update; 0 = all B*L", c.dodt.dreamer.imagine_starts));
    f.push_back(DODT_FIELD("dreamer", "explore_noise", "exploration noise std in normalized action units", c.dodt.dreamer.explore_noise));
    f.push_back(DODT_FIELD("dreamer", "actor_hidden", "actor hidden widths", c.dodt.dreamer.actor_hidden));
    f.push_back(DODT_FIELD("dreamer", "value_hidden", "value hidden widths", c.dodt.dreamer.value_hidden));
    f.push_back(DODT_FIELD("dreamer", "actor_lr", "actor Adam learning rate", c.dodt.dreamer.actor_optim.lr));
    f.push_back(DODT_FIELD("dreamer", "value_lr", "value Adam learning rate", c.dodt.dreamer.value_optim.lr));
    f.push_back(DODT_FIELD("dreamer", "actor_clip_norm", "actor gradient-norm clip; 0 = off", c.dodt.dreamer.actor_optim.clip_norm));
    f.push_back(DODT_FIELD("dreamer", "value_clip_norm", "value gradient-norm clip; 0 = off", c.dodt.dreamer.value_optim.clip_norm));
    f.push_back(DODT_FIELD("dreamer", "variant", "standard (discounted) or literal objectives", c.dodt.dreamer.variant));
    // [odt]
    f.push_back(DODT_FIELD("odt", "context", "K, context length in steps", c.dodt.odt.model.context));
    f.push_back(DODT_FIELD("odt", "layers", "decoder blocks", c.dodt.odt.model.layers));
    f.push_back(DODT_FIELD("odt", "width", "model width", c.dodt.odt.model.width));
    f.push_back(DODT_FIELD("odt", "heads", "attention heads (must divide width)", c.dodt.odt.model.heads));
    f.push_back(DODT_FIELD("odt", "max_timestep", "size of the timestep embedding table", c.dodt.odt.model.max_timestep));
    f.push_back(DODT_FIELD("odt", "rtg_scale", "RTG tokens are divided by this", c.dodt.odt.model.rtg_scale));
    f.push_back(DODT_FIELD("odt", "online_rtg", "T_online, RTG of exploration rollouts", c.dodt.odt.online_rtg));
    f.push_back(DODT_FIELD("odt", "eval_rtg", "RTG of evaluation rollouts", c.dodt.odt.eval_rtg));
    f.push_back(DODT_FIELD("odt", "iterations", "I, gradient steps per round", c.dodt.odt.iterations));
    f.push_back(DODT_FIELD("odt", "entropy_coef", "weight of the entropy bonus", c.dodt.odt.entropy_coef));
    f.push_back(DODT_FIELD("odt", "batch", "windows per gradient step", c.dodt.odt.batch));
    f.push_back(DODT_FIELD("odt", "rtg_gamma", "discount for RTG relabeling of sampled windows", c.dodt.odt.rtg_gamma));
    f.push_back(DODT_FIELD("odt", "lr", "Adam learning rate", c.dodt.odt.optim.lr));
    f.push_back(DODT_FIELD("odt", "clip_norm", "global gradient-norm clip; 0 = off", c.dodt.odt.optim.clip_norm));
    const RunConfig defaults = default_run_config();
    for (auto& x : f) x.info.default_value = x.get(defaults);
    return f;
  }();
  return table;
}

#undef DODT_FIELD

// (section, key) -> first line where it appears, for diagnostics.
std::map<std::pair<std::string, std::string>, std::size_t> locate_keys(const std::string& text) {
  std::map<std::pair<std::string, std::string>, std::size_t> out;
  std::stringstream ss(text);
  std::string line, section;
  for (std::size_t n = 1; std::getline(ss, line); ++n) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      out.emplace(std::make_pair(section, std::string()), n);
    } else if (const auto eq = t.find('='); eq != std::string::npos) {
      out.emplace(std::make_pair(section, trim(t.substr(0, eq))), n);
    }
  }
  return out;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  auto& d = c.dodt.dreamer;
  d.seq_len = 20;
  d.batch = 8;
  d.train_steps = 50;
  d.imagine_starts = 32;
  d.actor_optim.lr = 3e-4;
  d.value_optim.lr = 3e-4;
  auto& o = c.dodt.odt;
  o.model.rtg_scale = 1000.0;
  o.online_rtg = -200.0;
  o.eval_rtg = -200.0;
  o.optim.lr = 3e-4;
  return c;
}

std::vector<FieldInfo> config_fields() {
  std::vector<FieldInfo> out;
  for (const auto& f : fields()) out.push_back(f.info);
  return out;
}

void validate(const RunConfig& c) {
  const auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  const auto& d = c.dodt.dreamer;
  const auto& o = c.dodt.odt;
  if (c.seeds.empty()) fail("run.seeds", "at least one seed is required");
  if (c.dodt.rounds == 0) fail("run.rounds", "must be >= 1");
  if (c.dodt.buffer_capacity == 0) fail("run.buffer_capacity", "must be >= 1");
  if (c.dodt.eval_episodes == 0) fail("run.eval_episodes", "must be >= 1");
  if (!(d.gamma > 0.0 && d.gamma < 1.0)) fail("run.gamma", "must lie in (0, 1)");
  if (d.horizon <= 0) fail("dreamer.horizon", "must be >= 1");
  if (d.seq_len < 2) fail("dreamer.seq_len", "must be >= 2");
  if (d.batch == 0) fail("dreamer.batch", "must be >= 1");
  if (d.explore_noise < 0.0) fail("dreamer.explore_noise", "must be >= 0");
  if (d.model.deter == 0) fail("world_model.deter", "must be >= 1");
  if (d.model.stoch == 0) fail("world_model.stoch", "must be >= 1");
  if (!(d.model.min_std > 0.0)) fail("world_model.min_std", "must be > 0");
  if (d.model.free_nats < 0.0) fail("world_model.free_nats", "must be >= 0");
  if (o.model.context == 0) fail("odt.context", "must be >= 1");
  if (o.model.layers == 0) fail("odt.layers", "must be >= 1");
  if (o.model.heads == 0 || o.model.width % o.model.heads != 0) {
    fail("odt.heads", "must divide odt.width");
  }
  if (!(o.model.rtg_scale > 0.0)) fail("odt.rtg_scale", "must be > 0");
  if (!std::isfinite(o.online_rtg)) fail("odt.online_rtg", "must be finite");
  if (!std::isfinite(o.eval_rtg)) fail("odt.eval_rtg", "must be finite");
  if (o.batch == 0) fail("odt.batch", "must be >= 1");
  if (o.entropy_coef < 0.0) fail("odt.entropy_coef", "must be >= 0");
  if (!(o.rtg_gamma > 0.0 && o.rtg_gamma <= 1.0)) fail("odt.rtg_gamma", "must lie in (0, 1]");
  for (const auto* lr : {&d.model_optim.lr, &d.actor_optim.lr, &d.value_optim.lr, &o.optim.lr}) {
    if (*lr < 0.0) fail("learning rates", "must be >= 0");
  }
  try {
    env::make_env(c.dodt.env);
  } catch (const std::exception& e) {
    fail("run.env", e.what());
  }
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto lines = locate_keys(text);
  const auto where = [&](const std::string& section, const std::string& key) {
    const auto it = lines.find({section, key});
    return source + (it != lines.end() ? ":" + std::to_string(it->second) : std::string()) + ": ";
  };

  boost::property_tree::ptree tree;
  try {
    std::istringstream ss(text);
    boost::property_tree::ini_parser::read_ini(ss, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  std::set<std::string> sections;
  for (const auto& f : fields()) sections.insert(f.info.section);
  RunConfig config = default_run_config();
  for (const auto& [section, body] : tree) {
    if (!sections.contains(section)) {
      if (body.empty() && !body.data().empty()) {
        throw ConfigError(where("", section) + "key '" + section + "' is outside any section");
      }
      throw ConfigError(where(section, "") + "unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) {
        return f.info.section == section && f.info.key == key;
      });
      if (it == fields().end()) {
        throw ConfigError(where(section, key) + "unknown key '" + key + "' in section [" +
                          section + "]");
      }
      try {
        it->set(config, trim(value.data()));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(where(section, key) + section + "." + key + ": invalid value '" +
                          value.data() + "' (" + e.what() + ")");
      }
    }
  }
  try {
    validate(config);
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path.string() + ": cannot open config file");
  return parse_config(f, path.string());
}

void write_config(std::ostream& out, const RunConfig& config) {
  std::string section;
  for (const auto& f : fields()) {
    if (f.info.section != section) {
      if (!section.empty()) out << '\n';
      section = f.info.section;
      out << '[' << section << "]\n";
    }
    out << "; " << f.info.doc << " (default "
        << (f.info.default_value.empty() ? "empty" : f.info.default_value) << ")\n";
    out << f.info.key << " = " << f.get(config) << '\n';
  }
}

std::string to_string(const RunConfig& config) {
  std::ostringstream ss;
  write_config(ss, config);
  return ss.str();
}

}  // namespace dodt::cli
