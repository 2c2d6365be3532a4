#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dodt/cli/commands.hpp"
#include "dodt/cli/config.hpp"

int main(int argc, char** argv) {
  using namespace dodt::cli;
  CLI::App app{"Dreamer + online decision transformer training harness"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "per-round progress logging");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "run an experiment and write metrics, checkpoints and the resolved config");
  t->add_option("--config", train.config_path, "INI config file")->required();
  t->add_option("--algo", train.algo, "odt, dreamer or dodt (overrides the config)");
  t->add_option("--seed", train.seed, "single seed (overrides the config; DODT_SEED wins)");
  t->add_option("--out", train.out_dir, "output directory (overrides the config)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate an ODT checkpoint");
  e->add_option("--checkpoint", eval.checkpoint_dir, "checkpoint directory")->required();
  e->add_option("--env", eval.env, "environment (default: the checkpoint's)");
  e->add_option("--episodes", eval.episodes, "evaluation episodes")->capture_default_str();
  e->add_option("--rtg", eval.rtg, "initial return-to-go")->capture_default_str();
  e->add_option("--seed", eval.seed, "evaluation seed (default 0; DODT_SEED wins)");
  e->add_option("--dump-episodes", eval.dump_episodes, "write per-episode returns as CSV");

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "finite-difference check of every op and composite loss");
  g->add_option("--trials", grad.trials, "random shapes per op")->capture_default_str();
  g->add_option("--seed", grad.seed, "suite seed")->capture_default_str();
  g->add_option("--corrupt", grad.corrupt_op)->group("");

  PlotArgs plot;
  auto* p = app.add_subcommand("plot", "render metrics CSVs as an SVG figure");
  p->add_option("--metrics", plot.metrics, "metrics CSV files")->required()->expected(1, -1);
  p->add_option("--out", plot.out_path, "SVG output path")->required();

  auto* c = app.add_subcommand("config", "print the default config with documentation");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  if (*t) return cmd_train(train, std::cout, std::cerr);
  if (*e) return cmd_eval(eval, std::cout, std::cerr);
  if (*g) return cmd_gradcheck(grad, std::cout, std::cerr);
  if (*p) return cmd_plot(plot, std::cout, std::cerr);
  if (*c) {
    write_config(std::cout, default_run_config());
    return 0;
  }
  return 1;
}
