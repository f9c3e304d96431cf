// SPDX-License-Identifier: Apache-2.0
//
// sgsim: deterministic parameter-server training simulator with top-K
// error-feedback compression.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgsim/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Deterministic parameter-server simulator for top-K error-feedback SGD"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string suite = "all";
  std::string grid_text;
  std::string run_dir;
  std::string plot_out = "plot.csv";
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto* run = app.add_subcommand("run", "Execute one experiment from a JSON config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides config)");
  run->add_option("--seed", seed, "Seed override")->each([&](const std::string&) { seed_set = true; });

  auto* sweep = app.add_subcommand("sweep-lr", "Run a learning-rate grid over one config");
  sweep->add_option("--config", config_path, "Experiment config (JSON)")->required();
  sweep->add_option("--out", out_dir, "Output directory (overrides config)");
  sweep->add_option("--grid", grid_text, "lo:hi:step or comma-separated rates (default 0.01:0.25:0.01)");
  sweep->add_option("--seed", seed, "Seed override")->each([&](const std::string&) { seed_set = true; });

  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  verify->add_option("--suite", suite, "linalg|protocol|lemmas|toy|bounds|all");

  auto* plot = app.add_subcommand("plot-data", "Reshape a run's metrics into per-epoch rows");
  plot->add_option("--run", run_dir, "Run output directory")->required();
  plot->add_option("--out", plot_out, "Destination CSV");

  CLI11_PARSE(app, argc, argv);

  const std::optional<std::string> out_opt =
      out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir);
  const std::optional<std::uint64_t> seed_opt =
      seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt;

  if (run->parsed()) return sgsim::cmd_run(config_path, out_opt, seed_opt);
  if (sweep->parsed()) {
    std::vector<double> grid;
    try {
      grid = grid_text.empty() ? sgsim::default_lr_grid() : sgsim::parse_grid(grid_text);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "config error: %s\n", e.what());
      return sgsim::kExitConfigError;
    }
    return sgsim::cmd_sweep_lr(config_path, grid, out_opt, seed_opt);
  }
  if (verify->parsed()) return sgsim::cmd_verify(suite);
  if (plot->parsed()) return sgsim::cmd_plot_data(run_dir, plot_out);
  return sgsim::kExitConfigError;
}
