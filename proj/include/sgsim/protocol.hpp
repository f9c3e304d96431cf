// SPDX-License-Identifier: Apache-2.0
#pragma once

// Worker/server state machines for error-feedback top-K SGD.
//
// Per iteration t (1-based), each worker q forms the error-compensated value
//   a_t^q = eps_{t-1}^q + alpha_{t-1} * g^q(w_{t-1})
// sends its top-K part, and keeps the rest as the next error term. The
// server aggregates the weighted messages; in bidirectional mode it adds its
// own error term delta, compresses again for the downlink, and keeps the new
// residual. Every replica applies the identical broadcast payload, so models
// never diverge across workers.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sgsim/compression.hpp"
#include "sgsim/dense.hpp"
#include "sgsim/problems.hpp"
#include "sgsim/rng.hpp"
#include "sgsim/sparse.hpp"

namespace sgsim {

enum class Mode { vanilla, unidirectional, bidirectional };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::vanilla: return "vanilla";
    case Mode::unidirectional: return "unidirectional";
    case Mode::bidirectional: return "bidirectional";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Step-size schedules

enum class ScheduleKind { constant, inverse_poly };

struct Schedule {
  ScheduleKind kind = ScheduleKind::constant;
  double alpha0 = 0.1;
  double theta = 1.0;  // inverse_poly: alpha0 / (t+1)^theta, theta in (1/2, 1]

  static Schedule constant(double alpha0) { return {ScheduleKind::constant, alpha0, 0.0}; }
  static Schedule inverse_poly(double alpha0, double theta) {
    return {ScheduleKind::inverse_poly, alpha0, theta};
  }
};

inline double step_size(const Schedule& s, long t) {
  if (t < 0) throw std::invalid_argument("step_size: t must be >= 0");
  if (s.kind == ScheduleKind::constant) return s.alpha0;
  return s.alpha0 / std::pow(static_cast<double>(t) + 1.0, s.theta);
}

// ---------------------------------------------------------------------------
// Worker

struct WorkerStepResult {
  SparseVector msg;       // Top_K(a), the uplink payload
  DenseVector a;          // error-compensated value, for diagnostics
  DenseVector g_local;    // raw oracle gradient, for diagnostics
  std::optional<double> one_minus_gamma;  // measured uplink contraction
};

struct WorkerState {
  std::size_t index = 0;
  DenseVector epsilon;  // error memory, starts at zero
  Rng rng;
  const Problem* oracle = nullptr;
  CompressorSpec uplink;

  WorkerState(std::size_t index_, const Problem& oracle_, CompressorSpec uplink_, Rng rng_)
      : index(index_),
        epsilon(oracle_.dim(), 0.0),
        rng(std::move(rng_)),
        oracle(&oracle_),
        uplink(uplink_) {}
};

/// One worker iteration: evaluate the gradient at w, fold in the error
/// memory, compress, and keep the residual as the new error memory.
/// densify(msg) + epsilon == a holds bit-exactly afterwards.
inline WorkerStepResult worker_step(WorkerState& ws, const DenseVector& w, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("worker_step: alpha must be > 0");
  WorkerStepResult r;
  r.g_local = ws.oracle->worker_gradient(ws.index, w, ws.rng);
  r.a = axpy(alpha, r.g_local, ws.epsilon);
  auto outcome = compress(ws.uplink, r.a);
  r.msg = std::move(outcome.kept);
  r.one_minus_gamma = outcome.measured_one_minus_gamma;
  ws.epsilon = std::move(outcome.residual);
  return r;
}

// ---------------------------------------------------------------------------
// Server

struct ServerState {
  DenseVector delta;  // error memory, used only in bidirectional mode
  std::vector<double> weights;
  CompressorSpec downlink;

  ServerState(std::size_t dim, std::vector<double> weights_, CompressorSpec downlink_)
      : delta(dim, 0.0), weights(std::move(weights_)), downlink(downlink_) {}
};

inline SparseVector aggregate_uplink(const std::vector<double>& weights,
                                     const std::vector<SparseVector>& msgs) {
  if (msgs.size() != weights.size())
    throw std::invalid_argument("aggregate_uplink: one message per worker required");
  std::vector<std::pair<double, const SparseVector*>> terms;
  terms.reserve(msgs.size());
  for (std::size_t q = 0; q < msgs.size(); ++q) terms.emplace_back(weights[q], &msgs[q]);
  return sparse_accumulate(terms);
}

/// Uncompressed downlink: the weighted aggregate is broadcast as-is and the
/// server error memory stays zero.
inline DenseVector server_step_unidirectional(ServerState& ss,
                                              const std::vector<SparseVector>& msgs) {
  return densify(aggregate_uplink(ss.weights, msgs));
}

struct BidirectionalServerResult {
  SparseVector down_msg;  // Top_K(g), the downlink payload
  DenseVector g;          // pre-compression value, for diagnostics
  std::optional<double> one_minus_gamma;  // measured downlink contraction
};

/// Compressed downlink: fold the server error memory into the aggregate,
/// compress, and keep the residual. densify(down_msg) + delta == g holds
/// bit-exactly afterwards.
inline BidirectionalServerResult server_step_bidirectional(
    ServerState& ss, const std::vector<SparseVector>& msgs) {
  BidirectionalServerResult r;
  r.g = densify(aggregate_uplink(ss.weights, msgs));
  check_same_dim(r.g.size(), ss.delta.size());
  for (std::size_t i = 0; i < r.g.size(); ++i) r.g[i] += ss.delta[i];
  auto outcome = compress(ss.downlink, r.g);
  r.down_msg = std::move(outcome.kept);
  r.one_minus_gamma = outcome.measured_one_minus_gamma;
  ss.delta = std::move(outcome.residual);
  return r;
}

// ---------------------------------------------------------------------------
// Model update and the error-corrected sequence

inline DenseVector apply_update(const DenseVector& w, const SparseVector& update) {
  check_same_dim(w.size(), update.dim);
  DenseVector out = w;
  for (const auto& e : update.entries) out[e.index] -= e.value;
  return out;
}

inline DenseVector apply_update(const DenseVector& w, const DenseVector& update) {
  return subtract(w, update);
}

/// Sum of all outstanding error memories, sum_q p_q eps^q + delta.
inline DenseVector outstanding_error(const std::vector<WorkerState>& workers,
                                     const ServerState& ss) {
  DenseVector m(ss.delta.size(), 0.0);
  for (const auto& ws : workers) add_scaled(m, ss.weights[ws.index], ws.epsilon);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += ss.delta[i];
  return m;
}

/// The iterate with every outstanding error added back; it follows exact
/// SGD dynamics regardless of compression.
inline DenseVector error_corrected_iterate(const DenseVector& w,
                                           const std::vector<WorkerState>& workers,
                                           const ServerState& ss) {
  return subtract(w, outstanding_error(workers, ss));
}

}  // namespace sgsim
