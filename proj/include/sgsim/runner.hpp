// SPDX-License-Identifier: Apache-2.0
#pragma once

// CLI entry points, factored out of main() so tests can invoke the
// subcommands in-process.
//
// Exit codes: 0 success, 1 verification failures, 2 configuration error,
// 3 divergence, 4 every sweep cell diverged.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sgsim/config.hpp"
#include "sgsim/errors.hpp"
#include "sgsim/io.hpp"
#include "sgsim/trainer.hpp"
#include "sgsim/verify.hpp"

namespace sgsim {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitSweepAllDiverged = 4;

namespace runner_detail {

/// Epoch-derived step counts need the dataset size, which for file-backed
/// datasets is only known after loading.
inline void finalize_epochs(ExperimentConfig& cfg, const Problem& problem) {
  if (cfg.problem.kind != ProblemSpec::Kind::mlp || cfg.epochs == 0) return;
  if (const auto* mlp = problem.as_mlp()) {
    const std::size_t shard = mlp->dataset().n / cfg.workers;
    const auto derived = static_cast<long>(shard / cfg.problem.batch);
    if (derived >= 1 && derived != cfg.steps_per_epoch) {
      cfg.steps_per_epoch = derived;
      cfg.steps = cfg.epochs * derived;
    }
  }
}

struct LoadedRun {
  ExperimentConfig cfg;
  Problem problem;
  DenseVector w0;

  LoadedRun(ExperimentConfig cfg_, Problem problem_, DenseVector w0_)
      : cfg(std::move(cfg_)), problem(std::move(problem_)), w0(std::move(w0_)) {}
};

inline LoadedRun load_run(const std::string& config_path, const std::optional<std::string>& out,
                          const std::optional<std::uint64_t>& seed_override) {
  ExperimentConfig cfg = load_config(config_path);
  if (out) cfg.output_dir = *out;
  if (seed_override) cfg.seed = *seed_override;
  Problem problem = build_problem(cfg);
  finalize_epochs(cfg, problem);
  DenseVector w0 = initial_point(cfg, problem);
  return LoadedRun(std::move(cfg), std::move(problem), std::move(w0));
}

}  // namespace runner_detail

inline int cmd_run(const std::string& config_path, const std::optional<std::string>& out = {},
                   const std::optional<std::uint64_t>& seed_override = {}) {
  try {
    auto run = runner_detail::load_run(config_path, out, seed_override);
    const TrainingLog log =
        run_protocol(run.problem, run_params_from_config(run.cfg), run.w0);
    write_run_outputs(run.cfg.output_dir, run.cfg, run.problem, log);
    std::printf("run: %ld steps, final loss %.17g -> %s\n", static_cast<long>(log.records.size()),
                log.final_loss, run.cfg.output_dir.c_str());
    return kExitOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitDivergence;
  }
}

/// Runs the base config once per learning rate; writes sweep.csv with one
/// row per cell. A diverged cell is recorded, not fatal.
inline int cmd_sweep_lr(const std::string& config_path, const std::vector<double>& grid,
                        const std::optional<std::string>& out = {},
                        const std::optional<std::uint64_t>& seed_override = {}) {
  if (grid.empty()) {
    std::fprintf(stderr, "config error: empty learning-rate grid\n");
    return kExitConfigError;
  }
  try {
    auto run = runner_detail::load_run(config_path, out, seed_override);
    std::filesystem::create_directories(run.cfg.output_dir);
    std::ofstream sweep(run.cfg.output_dir + "/sweep.csv", std::ios::binary);
    sweep << "rate,final_loss,diverged_at\n";

    std::optional<double> best_rate;
    double best_loss = 0.0;
    std::size_t diverged = 0;
    for (double rate : grid) {
      ExperimentConfig cell = run.cfg;
      cell.schedule.alpha0 = rate;
      cell.output_dir = run.cfg.output_dir + "/lr_" + format_double(rate);
      try {
        const TrainingLog log =
            run_protocol(run.problem, run_params_from_config(cell), run.w0);
        write_run_outputs(cell.output_dir, cell, run.problem, log);
        sweep << format_double(rate) << ',' << format_double(log.final_loss) << ",\n";
        if (!best_rate || log.final_loss < best_loss) {
          best_rate = rate;
          best_loss = log.final_loss;
        }
      } catch (const DivergenceError& e) {
        ++diverged;
        sweep << format_double(rate) << ",," << e.step() << '\n';
      }
    }
    if (diverged == grid.size()) {
      std::fprintf(stderr, "sweep: all %zu cells diverged\n", diverged);
      return kExitSweepAllDiverged;
    }
    std::printf("sweep: best rate %.17g with final loss %.17g (%zu/%zu cells diverged)\n",
                *best_rate, best_loss, diverged, grid.size());
    return kExitOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  }
}

inline int cmd_verify(const std::string& suite_name) {
  const auto suite = suite_from_name(suite_name);
  if (!suite) {
    std::fprintf(stderr, "config error: unknown suite '%s' (linalg|protocol|lemmas|toy|bounds|all)\n",
                 suite_name.c_str());
    return kExitConfigError;
  }
  return print_results(run_suite(*suite)) == 0 ? kExitOk : kExitVerifyFailed;
}

/// Reshapes a run directory's metrics into a per-epoch table for external
/// plotting: epoch, maxima of the ratio diagnostics, mean loss and mean
/// non-zero fraction.
inline int cmd_plot_data(const std::string& run_dir, const std::string& out_path) {
  try {
    std::ifstream summary_in(run_dir + "/summary.json");
    if (!summary_in) throw FormatError(run_dir + "/summary.json", 0, "cannot open file");
    nlohmann::json summary;
    summary_in >> summary;
    const long steps_per_epoch = summary.at("config").at("steps_per_epoch").get<long>();

    std::ifstream metrics(run_dir + "/metrics.csv");
    if (!metrics) throw FormatError(run_dir + "/metrics.csv", 0, "cannot open file");
    std::string line;
    if (!std::getline(metrics, line) || line != kMetricsHeader)
      throw FormatError(run_dir + "/metrics.csv", 1, "unexpected header");

    std::vector<StepRecord> records;
    std::size_t line_no = 1;
    while (std::getline(metrics, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::size_t start = 0;
      while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (cells.size() != 13)
        throw FormatError(run_dir + "/metrics.csv", line_no, "expected 13 fields");
      const auto opt = [](const std::string& cell) -> std::optional<double> {
        if (cell.empty()) return std::nullopt;
        return std::stod(cell);
      };
      StepRecord rec;
      rec.t = std::stol(cells[0]);
      rec.loss = std::stod(cells[1]);
      rec.grad_norm_sq = std::stod(cells[2]);
      rec.rho = opt(cells[3]);
      rec.rho_hat = opt(cells[4]);
      rec.one_minus_gamma_uplink_max = opt(cells[5]);
      rec.one_minus_gamma_downlink = opt(cells[6]);
      rec.nonzero_fraction = std::stod(cells[7]);
      records.push_back(rec);
    }

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw FormatError(out_path, 0, "cannot write file");
    out << "epoch,max_rho,max_rho_hat,max_one_minus_gamma_uplink,max_one_minus_gamma_downlink,"
           "mean_loss,mean_nonzero_fraction\n";
    for (const auto& e : epoch_maxima(records, steps_per_epoch)) {
      const auto opt_str = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string{};
      };
      out << e.epoch << ',' << opt_str(e.max_rho) << ',' << opt_str(e.max_rho_hat) << ','
          << opt_str(e.max_one_minus_gamma_uplink) << ','
          << opt_str(e.max_one_minus_gamma_downlink) << ',' << format_double(e.mean_loss) << ','
          << format_double(e.mean_nonzero_fraction) << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "plot-data error: %s\n", e.what());
    return kExitConfigError;
  }
}

/// Parses "lo:hi:step" or a comma-separated list of rates.
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    double lo = 0, hi = 0, step = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0)
      throw ConfigError("grid", "expected lo:hi:step with step > 0");
    for (long i = 0;; ++i) {
      const double rate = lo + step * static_cast<double>(i);
      if (rate > hi + 1e-12) break;
      grid.push_back(rate);
    }
    return grid;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string cell = text.substr(start, comma - start);
    if (!cell.empty()) grid.push_back(std::stod(cell));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return grid;
}

/// The tuned-rate search grid used when none is given: 0.01 to 0.25
/// in steps of 0.01.
inline std::vector<double> default_lr_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 25; ++i) grid.push_back(static_cast<double>(i) * 0.01);
  return grid;
}

}  // namespace sgsim
