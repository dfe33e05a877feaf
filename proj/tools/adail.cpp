// Command-line driver: training, demonstration collection, grid evaluation,
// invariant checks, and deterministic replay of finished runs.

#include <CLI11.hpp>

#include <iostream>

#include "adail/cli.hpp"

using namespace adail;

namespace {

int dispatch(CLI::App& app, const std::string& verb,
             const std::function<int()>& body) {
  (void)app;
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error code=" << cli::kConfigError << " verb=" << verb
              << " msg=\"" << e.what() << "\"\n";
    return cli::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error code=" << cli::kRuntimeError << " verb=" << verb
              << " msg=\"" << e.what() << "\"\n";
    return cli::kRuntimeError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive adversarial imitation learning experiments"};
  app.require_subcommand(1);

  // shared options per subcommand
  struct TrainOpts {
    std::string config;
    std::vector<std::string> sets;
    std::string algorithm;
    std::string demos;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int iterations = -1;
  };

  auto add_train_opts = [](CLI::App* cmd, TrainOpts& o) {
    cmd->add_option("--config", o.config, "config file (section.key = value lines)");
    cmd->add_option("--set", o.sets, "override, key=value (repeatable)");
    cmd->add_option("--demos", o.demos, "demonstration file");
    cmd->add_option("--out", o.out, "output run directory");
    cmd->add_option("--seed", o.seed, "run seed")->each([&o](const std::string&) {
      o.seed_given = true;
    });
    cmd->add_option("--iterations", o.iterations, "iteration budget");
  };

  auto build_cfg = [](const TrainOpts& o, const std::string& forced_algo) {
    std::vector<std::string> ov;
    if (!forced_algo.empty()) ov.push_back("run.algorithm=" + forced_algo);
    if (!o.algorithm.empty()) ov.push_back("run.algorithm=" + o.algorithm);
    if (!o.demos.empty()) ov.push_back("run.demos=" + o.demos);
    if (!o.out.empty()) ov.push_back("run.out=" + o.out);
    if (o.seed_given) ov.push_back("run.seed=" + std::to_string(o.seed));
    if (o.iterations >= 0)
      ov.push_back("run.iterations=" + std::to_string(o.iterations));
    std::vector<std::string> all = o.sets;
    // flag-style options win over --set entries
    all.insert(all.end(), ov.begin(), ov.end());
    std::optional<std::string> cfg_path;
    if (!o.config.empty()) cfg_path = o.config;
    return parse_config(cfg_path, all);
  };

  TrainOpts expert_o;
  CLI::App* cmd_expert =
      app.add_subcommand("train-expert", "train the source-domain PPO expert");
  add_train_opts(cmd_expert, expert_o);

  TrainOpts train_o;
  CLI::App* cmd_train = app.add_subcommand("train", "train an imitation or RL baseline");
  add_train_opts(cmd_train, train_o);
  cmd_train->add_option("--algorithm", train_o.algorithm,
                        "expert|gail|gail_rand|adail_true|adail_pred|adail_rand|"
                        "vae_adail|up_true");

  std::string demos_run, demos_out;
  int demos_n = 16;
  std::uint64_t demos_seed = 0;
  CLI::App* cmd_demos = app.add_subcommand(
      "collect-demos", "roll deterministic expert episodes into a demo file");
  cmd_demos->add_option("--run", demos_run, "expert run directory")->required();
  cmd_demos->add_option("--n", demos_n, "episode count");
  cmd_demos->add_option("--seed", demos_seed, "collection seed");
  cmd_demos->add_option("--out", demos_out, "demo file path")->required();

  std::string eval_run, eval_ctx = "auto", eval_name;
  int eval_cells = 0, eval_eps = 0, eval_workers = 0;
  std::uint64_t eval_seed = 0;
  CLI::App* cmd_eval = app.add_subcommand("eval-grid",
                                          "mean-return heatmap over the dynamics grid");
  cmd_eval->add_option("--run", eval_run, "finished run directory")->required();
  cmd_eval->add_option("--context", eval_ctx, "auto|none|true_params|posterior|random");
  cmd_eval->add_option("--cells", eval_cells, "cells per axis");
  cmd_eval->add_option("--episodes", eval_eps, "episodes per cell");
  cmd_eval->add_option("--name", eval_name, "artifact base name");
  cmd_eval->add_option("--seed", eval_seed, "evaluation seed");
  cmd_eval->add_option("--workers", eval_workers, "parallel cell workers");

  std::string rmse_run, rmse_name;
  int rmse_cells = 0, rmse_eps = 0, rmse_workers = 0;
  std::uint64_t rmse_seed = 0;
  CLI::App* cmd_rmse =
      app.add_subcommand("rmse-grid", "posterior RMSE heatmap over the grid");
  cmd_rmse->add_option("--run", rmse_run, "finished run directory")->required();
  cmd_rmse->add_option("--cells", rmse_cells, "cells per axis");
  cmd_rmse->add_option("--episodes", rmse_eps, "episodes per cell");
  cmd_rmse->add_option("--name", rmse_name, "artifact base name");
  cmd_rmse->add_option("--seed", rmse_seed, "evaluation seed");
  cmd_rmse->add_option("--workers", rmse_workers, "parallel cell workers");

  std::uint64_t check_seed = 0;
  int check_trials = 20;
  CLI::App* cmd_check =
      app.add_subcommand("check", "run the internal invariant suites");
  cmd_check->add_option("--seed", check_seed, "suite seed");
  cmd_check->add_option("--trials", check_trials, "gradient-check trials per family");

  std::string replay_run;
  CLI::App* cmd_replay = app.add_subcommand(
      "replay", "re-execute a finished run and verify its metrics hash");
  cmd_replay->add_option("--run", replay_run, "finished run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : cli::kConfigError;
  }

  if (cmd_expert->parsed())
    return dispatch(app, "train-expert", [&] {
      return cli::verb_train(build_cfg(expert_o, "expert"), "train-expert");
    });
  if (cmd_train->parsed())
    return dispatch(app, "train", [&] {
      return cli::verb_train(build_cfg(train_o, ""), "train");
    });
  if (cmd_demos->parsed())
    return dispatch(app, "collect-demos", [&] {
      return cli::verb_collect_demos(demos_run, demos_n, demos_seed, demos_out);
    });
  if (cmd_eval->parsed())
    return dispatch(app, "eval-grid", [&] {
      return cli::verb_eval_grid(eval_run, eval_ctx, eval_cells, eval_eps,
                                 eval_name, eval_seed, eval_workers);
    });
  if (cmd_rmse->parsed())
    return dispatch(app, "rmse-grid", [&] {
      return cli::verb_rmse_grid(rmse_run, rmse_cells, rmse_eps, rmse_name,
                                 rmse_seed, rmse_workers);
    });
  if (cmd_check->parsed())
    return dispatch(app, "check", [&] { return cli::verb_check(check_seed, check_trials); });
  if (cmd_replay->parsed())
    return dispatch(app, "replay", [&] { return cli::verb_replay(replay_run); });
  return cli::kConfigError;
}
