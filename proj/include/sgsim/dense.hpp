// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense vector arithmetic. All reductions accumulate left to right in
// 64-bit floats so repeated runs are bit-identical.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sgsim {

using DenseVector = std::vector<double>;

inline void check_same_dim(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("dimension mismatch");
}

inline double dot(const DenseVector& x, const DenseVector& y) {
  check_same_dim(x.size(), y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

inline double norm_sq(const DenseVector& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

inline double l2_norm(const DenseVector& x) { return std::sqrt(norm_sq(x)); }

inline double l2_distance(const DenseVector& x, const DenseVector& y) {
  check_same_dim(x.size(), y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline DenseVector subtract(const DenseVector& x, const DenseVector& y) {
  check_same_dim(x.size(), y.size());
  DenseVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return out;
}

/// y += alpha * x, in place.
inline void add_scaled(DenseVector& y, double alpha, const DenseVector& x) {
  check_same_dim(y.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const DenseVector& x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace sgsim
