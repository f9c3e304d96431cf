// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run outputs.
//
//   metrics.csv  one row per step; fixed column order:
//                t, loss, grad_norm_sq, rho, rho_hat,
//                one_minus_gamma_uplink_max, one_minus_gamma_downlink,
//                nonzero_fraction, lemma1_residual, gap_norm,
//                gap_inequality_slack, inherent_error, distributed_error.
//                Absent values serialize as empty fields. Numbers use %.17g,
//                so identical runs produce byte-identical files.
//   summary.json final/initial loss, per-epoch maxima, communication-cost
//                totals, bound diagnostics, the resolved config, and the
//                tool version.
//   model.bin    16-byte header (magic "SGSIM001", then the dimension as a
//                little-endian 64-bit integer) followed by the parameters
//                as little-endian 64-bit floats.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgsim/config.hpp"
#include "sgsim/errors.hpp"
#include "sgsim/metrics.hpp"
#include "sgsim/trainer.hpp"
#include "sgsim/version.hpp"

namespace sgsim {

inline constexpr char kMetricsHeader[] =
    "t,loss,grad_norm_sq,rho,rho_hat,one_minus_gamma_uplink_max,one_minus_gamma_downlink,"
    "nonzero_fraction,lemma1_residual,gap_norm,gap_inequality_slack,inherent_error,"
    "distributed_error";

inline constexpr char kModelMagic[8] = {'S', 'G', 'S', 'I', 'M', '0', '0', '1'};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

inline void write_metrics_csv(const std::string& path, const std::vector<StepRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    out << r.t << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm_sq) << ','
        << format_optional(r.rho) << ',' << format_optional(r.rho_hat) << ','
        << format_optional(r.one_minus_gamma_uplink_max) << ','
        << format_optional(r.one_minus_gamma_downlink) << ','
        << format_double(r.nonzero_fraction) << ',' << format_double(r.lemma1_residual) << ','
        << format_double(r.gap_norm) << ',' << format_double(r.gap_inequality_slack) << ','
        << format_double(r.inherent_error) << ',' << format_double(r.distributed_error) << '\n';
  }
}

inline void write_model_bin(const std::string& path, const DenseVector& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kModelMagic, sizeof(kModelMagic));
  const auto write_u64 = [&](std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
  };
  write_u64(model.size());
  for (double v : model) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_u64(bits);
  }
}

inline DenseVector read_model_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path, 0, "cannot open file");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0)
    throw FormatError(path, 0, "bad magic, expected SGSIM001");
  const auto read_u64 = [&](std::size_t offset) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8))
      throw FormatError(path, offset, "unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
  };
  const std::uint64_t dim = read_u64(8);
  DenseVector model(dim);
  for (std::uint64_t i = 0; i < dim; ++i) {
    const std::uint64_t bits = read_u64(16 + 8 * i);
    std::memcpy(&model[i], &bits, sizeof(double));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Summary

/// Trajectory-level bound diagnostics for deterministic quadratic runs:
/// measured constants plugged into the convergence-bound evaluators, plus
/// the weighted average of the measured squared gradient norms.
struct BoundDiagnostics {
  double gamma = 1.0;
  double rho = 0.0;
  double lambda = 1.0;
  double second_moment = 0.0;
  double bound_d = 0.0;
  double rhs = 0.0;
  double lhs = 0.0;
  bool satisfied = false;
};

inline std::optional<BoundDiagnostics> bound_diagnostics(const ExperimentConfig& cfg,
                                                         const Problem& problem,
                                                         const TrainingLog& log) {
  const auto* quad = problem.as_quadratic();
  if (quad == nullptr || log.records.size() < 2) return std::nullopt;

  BoundDiagnostics diag;
  const double one_minus_gamma = log.max_gap_one_minus_gamma;
  diag.gamma = 1.0 - one_minus_gamma;
  for (const auto& r : log.records) {
    const auto& ratio = cfg.mode == Mode::bidirectional ? r.rho : r.rho_hat;
    if (ratio && *ratio > diag.rho) diag.rho = *ratio;
    if (r.grad_norm_sq > diag.second_moment) diag.second_moment = r.grad_norm_sq;
  }
  diag.lambda = one_minus_gamma > 1e-300 ? 0.5 * diag.gamma / one_minus_gamma : 1.0;

  const auto T = static_cast<long>(log.records.size());
  const double f_star = quad->optimum().second;
  const BoundConstants constants(QuadraticProblem::kLipschitz, diag.second_moment, diag.gamma,
                                 diag.lambda, log.initial_loss, f_star, diag.rho);
  diag.bound_d = bound_D(cfg.schedule, diag.gamma, diag.lambda, T - 1);
  diag.rhs = bound_rhs(constants, cfg.schedule, T - 1);

  double weighted = 0.0;
  double alpha_sum = 0.0;
  for (const auto& r : log.records) {
    const double alpha = step_size(cfg.schedule, r.t - 1);
    weighted += alpha * r.grad_norm_sq;
    alpha_sum += alpha;
  }
  diag.lhs = weighted / alpha_sum;
  diag.satisfied = diag.lhs <= diag.rhs;
  return diag;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const Problem& problem,
                                   const TrainingLog& log) {
  nlohmann::json j;
  j["tool_version"] = kVersion;
  j["config"] = config_to_json(cfg);
  j["mode"] = mode_name(cfg.mode);
  j["steps"] = log.records.size();
  j["initial_loss"] = log.initial_loss;
  j["final_loss"] = log.final_loss;
  j["wall_ms"] = log.wall_ms;

  if (const auto* quad = problem.as_quadratic()) {
    const auto [w_star, f_star] = quad->optimum();
    j["f_star"] = f_star;
    j["final_loss_minus_f_star"] = log.final_loss - f_star;
  }

  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : epoch_maxima(log.records, cfg.steps_per_epoch)) {
    nlohmann::json ej;
    ej["epoch"] = e.epoch;
    ej["steps"] = e.steps;
    ej["mean_loss"] = e.mean_loss;
    ej["mean_nonzero_fraction"] = e.mean_nonzero_fraction;
    if (e.max_rho) ej["max_rho"] = *e.max_rho;
    if (e.max_rho_hat) ej["max_rho_hat"] = *e.max_rho_hat;
    if (e.max_one_minus_gamma_uplink) ej["max_one_minus_gamma_uplink"] = *e.max_one_minus_gamma_uplink;
    if (e.max_one_minus_gamma_downlink)
      ej["max_one_minus_gamma_downlink"] = *e.max_one_minus_gamma_downlink;
    epochs.push_back(ej);
  }
  j["per_epoch"] = epochs;

  if (log.snapshot) {
    j["snapshot"] = {{"step", log.snapshot->t},
                     {"full_vs_uplink_compressed", log.snapshot->full_vs_uplink_compressed},
                     {"full_vs_both_compressed", log.snapshot->full_vs_both_compressed}};
  }

  if (cfg.comm && cfg.mode != Mode::vanilla) {
    CommParams p;
    p.alpha1 = cfg.comm->alpha1;
    p.alpha2 = cfg.comm->alpha2;
    p.beta1 = cfg.comm->beta1;
    p.beta2 = cfg.comm->beta2;
    p.workers = cfg.workers;
    p.k_uplink = cfg.k_uplink;
    p.k_downlink = cfg.k_downlink > 0 ? cfg.k_downlink : cfg.k_uplink;
    const Mode comm_mode =
        cfg.mode == Mode::bidirectional ? Mode::bidirectional : Mode::unidirectional;
    const double per_step = comm_time(comm_mode, p);
    j["comm"] = {{"per_step_seconds", per_step},
                 {"total_seconds", per_step * static_cast<double>(log.records.size())}};
  }

  if (const auto diag = bound_diagnostics(cfg, problem, log)) {
    j["bound"] = {{"gamma", diag->gamma},
                  {"rho", diag->rho},
                  {"lambda", diag->lambda},
                  {"second_moment", diag->second_moment},
                  {"D", diag->bound_d},
                  {"rhs", diag->rhs},
                  {"weighted_avg_grad_norm_sq", diag->lhs},
                  {"satisfied", diag->satisfied}};
  }
  return j;
}

inline void write_run_outputs(const std::string& dir, const ExperimentConfig& cfg,
                              const Problem& problem, const TrainingLog& log) {
  std::filesystem::create_directories(dir);
  write_metrics_csv(dir + "/metrics.csv", log.records);
  write_model_bin(dir + "/model.bin", log.final_model);
  std::ofstream out(dir + "/summary.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + dir + "/summary.json");
  out << summary_json(cfg, problem, log).dump(2) << '\n';
}

}  // namespace sgsim
