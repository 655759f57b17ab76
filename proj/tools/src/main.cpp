#include "nhop_cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace nhop::cli;
  CLI::App app{"Multi-timescale ensemble Q-learning experiments"};
  app.require_subcommand(1, 1);

  std::string config_path;
  CommandOptions options;
  std::string baseline = "none";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--out", options.out_dir, "Output directory (overrides NHOP_EQL_OUT and the config)");
    sub->add_option("--threads", options.threads, "Worker threads (overrides NHOP_EQL_THREADS and the config)");
    sub->add_flag("--plots", options.plots, "Also write SVG line plots");
  };
  auto* estimate = app.add_subcommand("estimate", "Estimate the transition model from sampled trajectories");
  auto* train = app.add_subcommand("train", "Train the ensemble and write metrics, errors and policies");
  auto* verify = app.add_subcommand("verify", "Run the analysis checks and write report.csv");
  for (auto* sub : {estimate, train, verify}) add_common(sub);
  train->add_option("--baseline", baseline, "Comparison run at a matched budget")
      ->check(CLI::IsMember({"none", "simple", "vi"}));
  train->add_option("--estimation-out", options.estimation_out, "Directory for the estimated model files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (baseline == "simple") options.baseline = Baseline::kSimple;
  if (baseline == "vi") options.baseline = Baseline::kValueIteration;
  const std::string command = app.get_subcommands().front()->get_name();
  return run_command(command, config_path, options);
}
