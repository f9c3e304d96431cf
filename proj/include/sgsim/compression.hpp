// SPDX-License-Identifier: Apache-2.0
#pragma once

// Compressor abstraction: top-K and identity. Every compression event
// reports its kept part, its residual (input = kept + residual, bit-exact)
// and the measured contraction ratio ||residual||^2 / ||input||^2, the
// per-event value of (1 - gamma). The ratio is undefined on a zero input
// and reported as absent.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>

#include "sgsim/dense.hpp"
#include "sgsim/sparse.hpp"

namespace sgsim {

enum class CompressorKind { topk, identity };

struct CompressorSpec {
  CompressorKind kind = CompressorKind::identity;
  std::size_t k = 0;  // ignored for identity

  static CompressorSpec top_k(std::size_t k) { return {CompressorKind::topk, k}; }
  static CompressorSpec identity() { return {CompressorKind::identity, 0}; }

  bool is_identity() const noexcept { return kind == CompressorKind::identity; }
};

struct CompressionOutcome {
  SparseVector kept;
  DenseVector residual;
  std::optional<double> measured_one_minus_gamma;
};

/// Worst-case value of (1 - gamma) for top-K on dimension d.
inline double gamma_floor(std::size_t d, std::size_t k) {
  if (d < 1 || k < 1 || k > d) throw std::invalid_argument("gamma_floor: require 1 <= K <= d");
  return static_cast<double>(d - k) / static_cast<double>(d);
}

/// K giving the requested non-zero fraction: K = d - floor((1 - fraction) * d).
inline std::size_t k_from_sparsity(std::size_t d, double fraction) {
  if (d < 1) throw std::invalid_argument("k_from_sparsity: d must be >= 1");
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("k_from_sparsity: fraction must be in (0, 1]");
  const double kept = std::floor((1.0 - fraction) * static_cast<double>(d));
  auto k = static_cast<std::size_t>(static_cast<double>(d) - kept);
  if (k < 1) k = 1;
  if (k > d) k = d;
  return k;
}

inline CompressionOutcome compress(const CompressorSpec& spec, const DenseVector& v) {
  if (v.empty()) throw std::invalid_argument("compress: empty vector");
  CompressionOutcome out;
  out.kept = top_k_select(v, spec.is_identity() ? v.size() : spec.k);
  out.residual = subtract(v, densify(out.kept));
  const double input_sq = norm_sq(v);
  if (input_sq > 0.0) {
    out.measured_one_minus_gamma = norm_sq(out.residual) / input_sq;
  }
  return out;
}

}  // namespace sgsim
