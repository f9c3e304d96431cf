// SPDX-License-Identifier: Apache-2.0
#pragma once

// The training loop: T iterations of worker steps, one server step, and a
// broadcast applied to the canonical model and every worker replica.
// Replicas are asserted identical after each broadcast. Every iteration
// emits one fully populated StepRecord. Runs are deterministic given the
// experiment seed; SGSIM_THREADS only parallelizes per-worker gradient
// evaluation and cannot change any result.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sgsim/compression.hpp"
#include "sgsim/dense.hpp"
#include "sgsim/errors.hpp"
#include "sgsim/metrics.hpp"
#include "sgsim/problems.hpp"
#include "sgsim/protocol.hpp"
#include "sgsim/rng.hpp"
#include "sgsim/sparse.hpp"

namespace sgsim {

struct RunParams {
  Mode mode = Mode::vanilla;
  CompressorSpec uplink = CompressorSpec::identity();
  CompressorSpec downlink = CompressorSpec::identity();
  Schedule schedule = Schedule::constant(0.1);
  long steps = 100;
  std::uint64_t seed = 0;
  long snapshot_step = 300;  // where the full-vs-compressed snapshot is taken
};

/// Distances between the full update delta + sum p_q a^q and the two
/// broadcast candidates: the raw compressed aggregate, and the same
/// aggregate after downlink top-K.
struct UpdateSnapshot {
  long t = 0;
  double full_vs_uplink_compressed = 0.0;
  double full_vs_both_compressed = 0.0;
};

struct TrainingLog {
  std::vector<StepRecord> records;
  DenseVector final_model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double max_gap_one_minus_gamma = 0.0;  // per-step contraction of the update error
  std::optional<UpdateSnapshot> snapshot;
  double wall_ms = 0.0;
};

/// Read-only view of the full protocol state after one iteration; used by
/// tests to check invariants the StepRecord does not carry.
struct StepSnapshot {
  long t = 0;
  const StepRecord& record;
  const DenseVector& w;
  const std::vector<DenseVector>& replicas;
  const std::vector<WorkerState>& workers;
  const ServerState& server;
  const DenseVector& w_tilde;
  const DenseVector& error_sum;
  const std::vector<DenseVector>& a_list;
  const std::vector<SparseVector>& msgs;
  const SparseVector& aggregate;
  const DenseVector& mean_update;
};

using StepObserver = std::function<void(const StepSnapshot&)>;

namespace detail {

inline unsigned worker_eval_threads() {
  if (const char* env = std::getenv("SGSIM_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 1) return static_cast<unsigned>(n);
  }
  return 1;
}

inline void for_each_worker(std::size_t n, unsigned threads,
                            const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t q = 0; q < n; ++q) body(q);
    return;
  }
  const unsigned used = std::min<unsigned>(threads, static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  pool.reserve(used);
  for (unsigned tid = 0; tid < used; ++tid) {
    pool.emplace_back([&, tid] {
      for (std::size_t q = tid; q < n; q += used) body(q);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Runs the protocol from the given start point. Worker rng streams are
/// split off `seed` by worker index; the start point itself is the caller's
/// responsibility.
inline TrainingLog run_protocol(const Problem& problem, const RunParams& params,
                                const DenseVector& w0, const StepObserver& observer = {}) {
  const std::size_t d = problem.dim();
  const std::size_t n = problem.workers();
  const auto& weights = problem.weights();
  check_same_dim(w0.size(), d);

  const CompressorSpec uplink =
      params.mode == Mode::vanilla ? CompressorSpec::identity() : params.uplink;
  const CompressorSpec downlink =
      params.mode == Mode::bidirectional ? params.downlink : CompressorSpec::identity();
  const std::size_t k_up = uplink.is_identity() ? d : uplink.k;
  const std::size_t k_down = downlink.is_identity() ? k_up : downlink.k;

  const Rng base(params.seed);
  std::vector<WorkerState> workers;
  workers.reserve(n);
  for (std::size_t q = 0; q < n; ++q)
    workers.emplace_back(q, problem, uplink, base.split(0x776f726bULL + q));
  ServerState server(d, weights, downlink);

  DenseVector w = w0;
  std::vector<DenseVector> replicas(n, w0);
  DenseVector w_tilde_prev = w0;  // all error memories start at zero
  double gap_prev = 0.0;

  TrainingLog log;
  log.records.reserve(static_cast<std::size_t>(params.steps));
  log.initial_loss = problem.loss(w0);
  if (!std::isfinite(log.initial_loss)) throw DivergenceError(0, "initial loss is not finite");

  const unsigned threads = detail::worker_eval_threads();
  std::vector<WorkerStepResult> results(n);
  const auto t_start = std::chrono::steady_clock::now();

  for (long t = 1; t <= params.steps; ++t) {
    const double alpha = step_size(params.schedule, t - 1);

    detail::for_each_worker(n, threads,
                            [&](std::size_t q) { results[q] = worker_step(workers[q], replicas[q], alpha); });

    std::vector<DenseVector> a_list(n);
    std::vector<SparseVector> msgs(n);
    DenseVector sum_pg(d, 0.0);
    for (std::size_t q = 0; q < n; ++q) {
      a_list[q] = std::move(results[q].a);
      msgs[q] = std::move(results[q].msg);
      add_scaled(sum_pg, weights[q], results[q].g_local);
    }

    StepRecord rec;
    rec.t = t;
    rec.grad_norm_sq = norm_sq(sum_pg);
    DenseVector mean_update(d);
    for (std::size_t i = 0; i < d; ++i) mean_update[i] = alpha * sum_pg[i];

    for (std::size_t q = 0; q < n; ++q) {
      const auto& omg = results[q].one_minus_gamma;
      if (omg && (!rec.one_minus_gamma_uplink_max || *omg > *rec.one_minus_gamma_uplink_max))
        rec.one_minus_gamma_uplink_max = omg;
    }

    const SparseVector aggregate = aggregate_uplink(weights, msgs);
    rec.nonzero_fraction = nonzero_fraction(aggregate);

    // Per-step diagnostics around s = delta + sum p_q a^q. The sum of the
    // compressed worker messages is the aggregate itself, since top-K
    // commutes with the positive weights.
    const DenseVector sum_pa = weighted_sum(a_list, weights);
    const DenseVector compressed_sum = densify(aggregate);
    const DenseVector delta_prev = server.delta;
    const bool nested = params.mode == Mode::bidirectional;
    const StepDiagnostics diag = step_diagnostics(
        sum_pa, compressed_sum, nested ? &delta_prev : nullptr, mean_update, k_up, k_down);
    rec.rho_hat = diag.rho_hat;
    if (nested) rec.rho = diag.rho;
    double sqrt_gap_omg = 0.0;
    if (params.mode != Mode::vanilla) {
      rec.inherent_error = diag.inherent;
      rec.distributed_error = diag.distributed;
      sqrt_gap_omg = diag.sqrt_one_minus_gamma;
      const double omg = sqrt_gap_omg * sqrt_gap_omg;
      if (omg > log.max_gap_one_minus_gamma) log.max_gap_one_minus_gamma = omg;
    }

    if (params.snapshot_step == t && params.mode != Mode::vanilla) {
      UpdateSnapshot snap;
      snap.t = t;
      DenseVector full = sum_pa;
      DenseVector compressed = compressed_sum;
      for (std::size_t i = 0; i < d; ++i) {
        full[i] += delta_prev[i];
        compressed[i] += delta_prev[i];
      }
      snap.full_vs_uplink_compressed = l2_distance(full, compressed);
      snap.full_vs_both_compressed =
          l2_distance(full, densify(top_k_select(compressed, k_down)));
      log.snapshot = snap;
    }

    // Server step and broadcast. The unidirectional/vanilla payload is the
    // raw aggregate; bidirectional compresses it once more.
    SparseVector payload;
    if (params.mode == Mode::bidirectional) {
      auto sres = server_step_bidirectional(server, msgs);
      rec.one_minus_gamma_downlink = sres.one_minus_gamma;
      payload = std::move(sres.down_msg);
    } else {
      payload = aggregate;
    }

    w = apply_update(w, payload);
    detail::for_each_worker(n, threads, [&](std::size_t q) {
      replicas[q] = apply_update(replicas[q], payload);
    });
    for (std::size_t q = 0; q < n; ++q) {
      if (std::memcmp(replicas[q].data(), w.data(), d * sizeof(double)) != 0)
        throw std::logic_error("replica diverged from canonical model at step " +
                               std::to_string(t));
    }

    const DenseVector error_sum = outstanding_error(workers, server);
    const DenseVector w_tilde = subtract(w, error_sum);
    rec.gap_norm = l2_distance(w, w_tilde);
    rec.lemma1_residual = lemma1_residual(w_tilde, w_tilde_prev, mean_update);
    const double tilde_step = l2_distance(w_tilde, w_tilde_prev);
    rec.gap_inequality_slack = gap_slack_from_parts(rec.gap_norm, gap_prev, tilde_step,
                                                    sqrt_gap_omg, rec.distributed_error);
    rec.loss = problem.loss(w);

    if (!std::isfinite(rec.loss) || !all_finite(w))
      throw DivergenceError(t, "non-finite loss or parameter");

    if (observer) {
      const StepSnapshot snapshot{t,         rec,    w,    replicas,  workers,    server,
                                  w_tilde,   error_sum, a_list, msgs, aggregate, mean_update};
      observer(snapshot);
    }

    gap_prev = rec.gap_norm;
    w_tilde_prev = w_tilde;
    log.records.push_back(std::move(rec));
  }

  log.final_model = std::move(w);
  log.final_loss = log.records.empty() ? log.initial_loss : log.records.back().loss;
  log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          t_start)
                    .count();
  return log;
}

}  // namespace sgsim
