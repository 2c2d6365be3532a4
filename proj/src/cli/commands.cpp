#include "dodt/cli/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "dodt/autodiff/ops.hpp"
#include "dodt/cli/checkpoint.hpp"
#include "dodt/cli/config.hpp"
#include "dodt/cli/gradcheck_suite.hpp"
#include "dodt/cli/plot.hpp"

namespace dodt::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path seed_dir(const fs::path& out, std::uint64_t seed) {
  return out / "checkpoints" / ("seed" + std::to_string(seed));
}

}  // namespace

std::optional<std::uint64_t> resolve_seed(std::optional<std::uint64_t> flag) {
  if (const char* env = std::getenv("DODT_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::char_traits<char>::length(env) && env[0] != '-') return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("DODT_SEED is not a non-negative integer: ") + env);
  }
  return flag;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = load_config(args.config_path);
    if (args.algo) {
      const auto a = trainer::algo_from_name(*args.algo);
      if (!a) throw ConfigError("--algo: expected odt, dreamer or dodt, got '" + *args.algo + "'");
      config.algo = *a;
    }
    if (const auto seed = resolve_seed(args.seed)) config.seeds = {*seed};
    if (args.out_dir) config.out_dir = *args.out_dir;
    validate(config);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    const fs::path out_dir = config.out_dir;
    fs::create_directories(out_dir);
    {
      std::ofstream f(out_dir / kResolvedConfigFile);
      write_config(f, config);
      if (!f) throw std::runtime_error("cannot write " + (out_dir / kResolvedConfigFile).string());
    }
    std::optional<Checkpoint> init_odt, init_dreamer;
    if (!config.init_odt_checkpoint.empty()) init_odt = load_checkpoint(config.init_odt_checkpoint);
    if (!config.init_dreamer_checkpoint.empty()) {
      init_dreamer = load_checkpoint(config.init_dreamer_checkpoint);
    }

    trainer::ExperimentOptions options;
    options.out_dir = out_dir;
    options.with_wall_clock = config.wall_clock;
    options.on_start = [&](const trainer::DodtRun& run) {
      if (init_odt && run.odt()) {
        check_compatible(*init_odt, "odt", run.odt()->spec());
        apply_checkpoint(*init_odt, run.odt()->parameters());
      }
      if (init_dreamer && run.dreamer()) {
        check_compatible(*init_dreamer, "dreamer", run.dreamer()->spec());
        apply_checkpoint(*init_dreamer, dreamer_parameters(*run.dreamer()));
      }
    };
    std::size_t finished = 0;  // runs finish in seed-list order
    options.on_seed_done = [&](const trainer::DodtRun& run) {
      const auto dir = seed_dir(out_dir, config.seeds[finished++]);
      if (run.odt()) save_checkpoint(dir / "odt", odt_checkpoint(*run.odt(), config.dodt.env));
      if (run.dreamer()) {
        save_checkpoint(dir / "dreamer", dreamer_checkpoint(*run.dreamer(), config.dodt.env));
      }
    };
    const auto result = trainer::run_experiment(config.dodt, config.algo, config.seeds, options);
    for (const auto& run : result.runs) {
      const auto& last = run.rounds.back();
      out << "seed=" << run.seed << " rounds=" << run.rounds.size()
          << " env_steps=" << last.env_steps_total;
      if (last.odt_eval_mean) out << " odt_eval_mean=" << fmt17(*last.odt_eval_mean);
      if (last.dreamer_return) out << " dreamer_return=" << fmt17(*last.dreamer_return);
      out << '\n';
    }
    out << "wrote " << out_dir.string() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.episodes == 0) throw std::invalid_argument("--episodes must be >= 1");
    const Checkpoint ckpt = load_checkpoint(args.checkpoint_dir);
    const std::string env_name =
        args.env ? *args.env : ckpt.meta.value("env", std::string("pendulum"));
    auto env = env::make_env(env_name);
    const std::uint64_t seed = resolve_seed(args.seed).value_or(0);
    auto agent = load_odt_agent(ckpt, env->spec(), odt::OdtConfig{}, seed);
    const auto res = agent->evaluate(*env, args.rtg, args.episodes, seed);
    out << "eval_mean=" << fmt17(res.mean) << " eval_std=" << fmt17(res.std)
        << " episodes=" << args.episodes << '\n';
    if (!args.dump_episodes.empty()) {
      std::ofstream f(args.dump_episodes);
      f << "episode,return\n";
      for (std::size_t i = 0; i < res.returns.size(); ++i) f << i << ',' << fmt17(res.returns[i]) << '\n';
      if (!f) throw std::runtime_error("cannot write " + args.dump_episodes);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  if (!args.corrupt_op.empty()) {
    const auto kind = ad::op_from_name(args.corrupt_op);
    if (!kind) {
      err << "error: unknown op '" << args.corrupt_op << "'\n";
      return 2;
    }
    ad::testing::corrupt_derivative(kind);
  }
  bool ok = false;
  try {
    ok = report_gradcheck(out, run_gradcheck_suite(args.trials, args.seed));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  ad::testing::corrupt_derivative(std::nullopt);
  return ok ? 0 : 1;
}

int cmd_plot(const PlotArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.metrics.empty()) throw std::invalid_argument("no metrics files given");
    std::vector<MetricsSeries> series;
    for (const auto& path : args.metrics) series.push_back(load_metrics(path));
    const std::string svg = render_svg(series);
    std::ofstream f(args.out_path);
    f << svg;
    if (!f) throw std::runtime_error("cannot write " + args.out_path);
    out << "wrote " << args.out_path << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dodt::cli
