// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sparse messages and the top-K magnitude selection primitive.
//
// SparseVector stores (index, value) pairs with strictly increasing indices
// and never holds an exact zero, which keeps non-zero counting well defined.
// Top-K selection is exact: quickselect on magnitudes with ties broken
// toward the lowest index, then the kept indices are sorted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sgsim/dense.hpp"

namespace sgsim {

struct SparseEntry {
  std::size_t index = 0;
  double value = 0.0;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

struct SparseVector {
  std::size_t dim = 0;
  std::vector<SparseEntry> entries;  // strictly increasing indices, no zeros

  std::size_t nonzero_count() const noexcept { return entries.size(); }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

inline DenseVector densify(const SparseVector& s) {
  DenseVector out(s.dim, 0.0);
  for (const auto& e : s.entries) out[e.index] = e.value;
  return out;
}

/// Keep the K entries of v with the largest absolute value; ties keep the
/// lowest index. Exact zeros are never stored, so the result may hold fewer
/// than K entries.
inline SparseVector top_k_select(const DenseVector& v, std::size_t k) {
  const std::size_t d = v.size();
  if (k < 1 || k > d) throw std::invalid_argument("top_k_select: K must be in [1, d]");

  SparseVector result;
  result.dim = d;

  const auto keep = [&](std::size_t idx) {
    if (v[idx] != 0.0) result.entries.push_back({idx, v[idx]});
  };

  if (k == d) {
    for (std::size_t i = 0; i < d; ++i) keep(i);
    return result;
  }

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto larger = [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(v[a]);
    const double mb = std::fabs(v[b]);
    if (ma != mb) return ma > mb;
    return a < b;  // ties keep the lowest index
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                   larger);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < k; ++i) keep(order[i]);
  return result;
}

/// Weighted sum of sparse messages. Terms accumulate in the given order
/// into a dense scratch buffer; entries that cancel to exactly zero are
/// dropped from the result.
inline SparseVector sparse_accumulate(
    const std::vector<std::pair<double, const SparseVector*>>& terms) {
  if (terms.empty()) return {};
  const std::size_t d = terms.front().second->dim;
  for (const auto& [weight, msg] : terms) {
    (void)weight;
    if (msg->dim != d) throw std::invalid_argument("sparse_accumulate: dimension mismatch");
  }

  DenseVector acc(d, 0.0);
  std::vector<char> touched(d, 0);
  for (const auto& [weight, msg] : terms) {
    for (const auto& e : msg->entries) {
      acc[e.index] += weight * e.value;
      touched[e.index] = 1;
    }
  }

  SparseVector result;
  result.dim = d;
  for (std::size_t i = 0; i < d; ++i) {
    if (touched[i] && acc[i] != 0.0) result.entries.push_back({i, acc[i]});
  }
  return result;
}

inline SparseVector sparse_accumulate(const std::vector<std::pair<double, SparseVector>>& terms) {
  std::vector<std::pair<double, const SparseVector*>> refs;
  refs.reserve(terms.size());
  for (const auto& [weight, msg] : terms) refs.emplace_back(weight, &msg);
  return sparse_accumulate(refs);
}

/// alpha * x + y for dense x.
inline DenseVector axpy(double alpha, const DenseVector& x, const DenseVector& y) {
  check_same_dim(x.size(), y.size());
  DenseVector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = alpha * x[i] + y[i];
  return out;
}

/// alpha * x + y for sparse x; untouched coordinates of y pass through.
inline DenseVector axpy(double alpha, const SparseVector& x, const DenseVector& y) {
  check_same_dim(x.dim, y.size());
  DenseVector out = y;
  for (const auto& e : x.entries) out[e.index] += alpha * e.value;
  return out;
}

}  // namespace sgsim
