// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gradient oracles.
//
// Three problem families share one shape: N workers, weights p_q summing to
// one, a per-worker loss F^q, and the global objective F(w) = sum p_q F^q(w).
//
//   QuadraticProblem    deterministic, F^q(w) = 1/2 ||w - c^q||^2
//   LeastSquaresProblem stochastic linear regression over per-worker shards
//   MlpProblem          ReLU MLP with softmax cross-entropy over a dataset
//
// Stochastic oracles draw minibatches uniformly without replacement from the
// worker's shard, so the minibatch gradient is unbiased for the worker's
// full gradient.

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sgsim/dataset.hpp"
#include "sgsim/dense.hpp"
#include "sgsim/errors.hpp"
#include "sgsim/rng.hpp"

namespace sgsim {

inline std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

namespace detail {

inline void check_worker_index(std::size_t q, std::size_t n) {
  if (q >= n) throw std::invalid_argument("worker index " + std::to_string(q) + " out of range");
}

/// b distinct indices drawn uniformly from [0, n) via partial Fisher-Yates.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t b,
                                                           Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < b; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(b);
  return pool;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quadratic

class QuadraticProblem {
 public:
  static constexpr double kLipschitz = 1.0;  // hessian of F is the identity

  QuadraticProblem(std::vector<DenseVector> centers, std::vector<double> weights)
      : centers_(std::move(centers)), weights_(std::move(weights)) {
    if (centers_.empty()) throw std::invalid_argument("QuadraticProblem: need >= 1 center");
    if (weights_.size() != centers_.size())
      throw std::invalid_argument("QuadraticProblem: weights/centers size mismatch");
    d_ = centers_.front().size();
    for (const auto& c : centers_) check_same_dim(c.size(), d_);
  }

  /// The distributed problem with every worker target a constant vector.
  static QuadraticProblem constant_centers(std::size_t d, const std::vector<double>& levels,
                                           std::vector<double> weights) {
    std::vector<DenseVector> centers;
    centers.reserve(levels.size());
    for (double level : levels) centers.emplace_back(d, level);
    return QuadraticProblem(std::move(centers), std::move(weights));
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t workers() const noexcept { return centers_.size(); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const DenseVector& center(std::size_t q) const { return centers_[q]; }

  DenseVector gradient(std::size_t q, const DenseVector& w) const {
    detail::check_worker_index(q, workers());
    check_same_dim(w.size(), d_);
    return subtract(w, centers_[q]);
  }

  double worker_loss(std::size_t q, const DenseVector& w) const {
    detail::check_worker_index(q, workers());
    return 0.5 * norm_sq(subtract(w, centers_[q]));
  }

  double loss(const DenseVector& w) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < workers(); ++q) acc += weights_[q] * worker_loss(q, w);
    return acc;
  }

  /// Closed-form minimizer and minimum value.
  std::pair<DenseVector, double> optimum() const {
    DenseVector w_star(d_, 0.0);
    for (std::size_t q = 0; q < workers(); ++q) add_scaled(w_star, weights_[q], centers_[q]);
    return {w_star, loss(w_star)};
  }

 private:
  std::vector<DenseVector> centers_;
  std::vector<double> weights_;
  std::size_t d_ = 0;
};

inline DenseVector quadratic_gradient(const QuadraticProblem& p, std::size_t q,
                                      const DenseVector& w) {
  return p.gradient(q, w);
}

inline std::pair<DenseVector, double> quadratic_optimum(const QuadraticProblem& p) {
  return p.optimum();
}

// ---------------------------------------------------------------------------
// Least squares

/// Per-worker loss F^q(w) = 1/(2 m_q) ||A_q w - y_q||^2, so minibatch means
/// are unbiased for worker full gradients.
class LeastSquaresProblem {
 public:
  struct Shard {
    std::vector<double> design;  // row-major, samples x d
    std::vector<double> targets;
    std::size_t samples = 0;
  };

  LeastSquaresProblem(std::size_t d, std::vector<Shard> shards, std::vector<double> weights,
                      std::size_t batch)
      : d_(d), shards_(std::move(shards)), weights_(std::move(weights)), batch_(batch) {
    if (shards_.empty()) throw std::invalid_argument("LeastSquaresProblem: need >= 1 shard");
    if (weights_.size() != shards_.size())
      throw std::invalid_argument("LeastSquaresProblem: weights/shards size mismatch");
    for (const auto& s : shards_) {
      if (s.samples == 0) throw std::invalid_argument("LeastSquaresProblem: empty shard");
      if (s.design.size() != s.samples * d_ || s.targets.size() != s.samples)
        throw std::invalid_argument("LeastSquaresProblem: shard shape mismatch");
      if (batch_ < 1 || batch_ > s.samples)
        throw std::invalid_argument("LeastSquaresProblem: batch must be in [1, shard size]");
    }
  }

  /// Gaussian design, planted parameter vector, Gaussian label noise.
  static LeastSquaresProblem synthetic(std::size_t d, std::size_t workers,
                                       std::size_t samples_per_worker, std::size_t batch,
                                       double noise_std, const Rng& base) {
    Rng truth_rng = base.split(0x72757468);
    DenseVector w_true(d);
    for (auto& v : w_true) v = truth_rng.normal();

    std::vector<Shard> shards(workers);
    for (std::size_t q = 0; q < workers; ++q) {
      Rng rng = base.split(0x64617461 + q);
      auto& shard = shards[q];
      shard.samples = samples_per_worker;
      shard.design.resize(samples_per_worker * d);
      shard.targets.resize(samples_per_worker);
      for (auto& v : shard.design) v = rng.normal();
      for (std::size_t i = 0; i < samples_per_worker; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < d; ++j) y += shard.design[i * d + j] * w_true[j];
        shard.targets[i] = y + noise_std * rng.normal();
      }
    }
    return LeastSquaresProblem(d, std::move(shards), uniform_weights(workers), batch);
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t workers() const noexcept { return shards_.size(); }
  std::size_t batch() const noexcept { return batch_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Shard& shard(std::size_t q) const { return shards_[q]; }

  /// Gradient of the per-sample loss 1/2 (a_i . w - y_i)^2, accumulated into out.
  void add_sample_gradient(std::size_t q, std::size_t i, const DenseVector& w, double scale,
                           DenseVector& out) const {
    const auto& s = shards_[q];
    const double* row = s.design.data() + i * d_;
    double r = -s.targets[i];
    for (std::size_t j = 0; j < d_; ++j) r += row[j] * w[j];
    for (std::size_t j = 0; j < d_; ++j) out[j] += scale * r * row[j];
  }

  DenseVector full_gradient(std::size_t q, const DenseVector& w) const {
    detail::check_worker_index(q, workers());
    check_same_dim(w.size(), d_);
    DenseVector g(d_, 0.0);
    const auto& s = shards_[q];
    const double scale = 1.0 / static_cast<double>(s.samples);
    for (std::size_t i = 0; i < s.samples; ++i) add_sample_gradient(q, i, w, scale, g);
    return g;
  }

  DenseVector stochastic_gradient(std::size_t q, const DenseVector& w, Rng& rng) const {
    detail::check_worker_index(q, workers());
    check_same_dim(w.size(), d_);
    const auto& s = shards_[q];
    if (s.samples == 0) throw std::logic_error("empty shard");
    if (batch_ == s.samples) return full_gradient(q, w);
    const auto picks = detail::sample_without_replacement(s.samples, batch_, rng);
    DenseVector g(d_, 0.0);
    const double scale = 1.0 / static_cast<double>(batch_);
    for (std::size_t i : picks) add_sample_gradient(q, i, w, scale, g);
    return g;
  }

  double worker_loss(std::size_t q, const DenseVector& w) const {
    const auto& s = shards_[q];
    double acc = 0.0;
    for (std::size_t i = 0; i < s.samples; ++i) {
      const double* row = s.design.data() + i * d_;
      double r = -s.targets[i];
      for (std::size_t j = 0; j < d_; ++j) r += row[j] * w[j];
      acc += 0.5 * r * r;
    }
    return acc / static_cast<double>(s.samples);
  }

  double loss(const DenseVector& w) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < workers(); ++q) acc += weights_[q] * worker_loss(q, w);
    return acc;
  }

 private:
  std::size_t d_;
  std::vector<Shard> shards_;
  std::vector<double> weights_;
  std::size_t batch_;
};

// ---------------------------------------------------------------------------
// MLP

/// Fully connected ReLU network with a softmax cross-entropy head. Parameters
/// live in one flat vector, layer by layer: weight matrix (fan_out x fan_in,
/// row-major) followed by the bias.
class MlpProblem {
 public:
  MlpProblem(std::vector<std::size_t> layer_sizes, Dataset dataset,
             std::vector<std::vector<std::size_t>> shards, std::vector<double> weights,
             std::size_t batch)
      : sizes_(std::move(layer_sizes)),
        dataset_(std::make_shared<Dataset>(std::move(dataset))),
        shards_(std::move(shards)),
        weights_(std::move(weights)),
        batch_(batch) {
    if (sizes_.size() < 2) throw std::invalid_argument("MlpProblem: need >= 2 layer sizes");
    if (sizes_.front() != dataset_->features)
      throw std::invalid_argument("MlpProblem: input size must match dataset features");
    if (sizes_.back() < dataset_->classes)
      throw std::invalid_argument("MlpProblem: output size smaller than label range");
    if (shards_.size() != weights_.size())
      throw std::invalid_argument("MlpProblem: weights/shards size mismatch");
    for (const auto& shard : shards_) {
      if (shard.empty()) throw std::invalid_argument("MlpProblem: empty shard");
      if (batch_ < 1 || batch_ > shard.size())
        throw std::invalid_argument("MlpProblem: batch must be in [1, shard size]");
    }
    d_ = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) d_ += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t workers() const noexcept { return shards_.size(); }
  std::size_t batch() const noexcept { return batch_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Dataset& dataset() const noexcept { return *dataset_; }
  const std::vector<std::size_t>& shard(std::size_t q) const { return shards_[q]; }
  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }

  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  DenseVector init_params(Rng rng) const {
    DenseVector w(d_, 0.0);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      const std::size_t weight_count = sizes_[l] * sizes_[l + 1];
      for (std::size_t i = 0; i < weight_count; ++i) w[offset + i] = rng.uniform(-bound, bound);
      offset += weight_count + sizes_[l + 1];  // biases stay zero
    }
    return w;
  }

  /// Mean cross-entropy loss and exact backpropagation gradient over the
  /// given sample indices.
  std::pair<double, DenseVector> loss_grad(const DenseVector& w,
                                           const std::vector<std::size_t>& batch_rows) const {
    check_same_dim(w.size(), d_);
    if (batch_rows.empty()) throw std::invalid_argument("MlpProblem: empty batch");

    const std::size_t layers = sizes_.size() - 1;
    DenseVector grad(d_, 0.0);
    double loss_acc = 0.0;

    // Per-sample activations; batch sizes are small so allocation per call
    // is not a concern.
    std::vector<DenseVector> pre(layers);   // z_l
    std::vector<DenseVector> post(layers);  // relu(z_l) for hidden, softmax input for last

    for (std::size_t row : batch_rows) {
      const double* x = dataset_->row(row);
      const int label = dataset_->labels[row];

      // forward
      const double* input = x;
      std::size_t input_size = sizes_[0];
      std::size_t offset = 0;
      for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t out_size = sizes_[l + 1];
        pre[l].assign(out_size, 0.0);
        const double* weight = w.data() + offset;
        const double* bias = w.data() + offset + input_size * out_size;
        for (std::size_t o = 0; o < out_size; ++o) {
          double z = bias[o];
          const double* wrow = weight + o * input_size;
          for (std::size_t i = 0; i < input_size; ++i) z += wrow[i] * input[i];
          pre[l][o] = z;
        }
        if (l + 1 < layers) {
          post[l] = pre[l];
          for (auto& v : post[l]) v = v > 0.0 ? v : 0.0;
          input = post[l].data();
        }
        offset += input_size * out_size + out_size;
        input_size = out_size;
      }

      // softmax cross-entropy on the final pre-activation
      const auto& logits = pre[layers - 1];
      double max_logit = logits[0];
      for (double v : logits) max_logit = std::max(max_logit, v);
      double sum_exp = 0.0;
      for (double v : logits) sum_exp += std::exp(v - max_logit);
      loss_acc += std::log(sum_exp) + max_logit - logits[static_cast<std::size_t>(label)];

      // backward
      DenseVector delta(logits.size());
      for (std::size_t o = 0; o < logits.size(); ++o) {
        delta[o] = std::exp(logits[o] - max_logit) / sum_exp;
        if (o == static_cast<std::size_t>(label)) delta[o] -= 1.0;
      }
      for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in_size = sizes_[l];
        const std::size_t out_size = sizes_[l + 1];
        std::size_t layer_offset = 0;
        for (std::size_t m = 0; m < l; ++m) layer_offset += sizes_[m] * sizes_[m + 1] + sizes_[m + 1];
        const double* input_act = (l == 0) ? x : post[l - 1].data();
        double* gw = grad.data() + layer_offset;
        double* gb = grad.data() + layer_offset + in_size * out_size;
        for (std::size_t o = 0; o < out_size; ++o) {
          const double dz = delta[o];
          double* grow = gw + o * in_size;
          for (std::size_t i = 0; i < in_size; ++i) grow[i] += dz * input_act[i];
          gb[o] += dz;
        }
        if (l > 0) {
          const double* weight = w.data() + layer_offset;
          DenseVector next(in_size, 0.0);
          for (std::size_t o = 0; o < out_size; ++o) {
            const double dz = delta[o];
            const double* wrow = weight + o * in_size;
            for (std::size_t i = 0; i < in_size; ++i) next[i] += wrow[i] * dz;
          }
          for (std::size_t i = 0; i < in_size; ++i)
            next[i] = pre[l - 1][i] > 0.0 ? next[i] : 0.0;
          delta = std::move(next);
        }
      }
    }

    const double inv = 1.0 / static_cast<double>(batch_rows.size());
    loss_acc *= inv;
    for (auto& g : grad) g *= inv;
    return {loss_acc, std::move(grad)};
  }

  DenseVector stochastic_gradient(std::size_t q, const DenseVector& w, Rng& rng) const {
    detail::check_worker_index(q, workers());
    const auto& shard = shards_[q];
    std::vector<std::size_t> rows;
    if (batch_ == shard.size()) {
      rows = shard;
    } else {
      for (std::size_t pick : detail::sample_without_replacement(shard.size(), batch_, rng))
        rows.push_back(shard[pick]);
    }
    return loss_grad(w, rows).second;
  }

  double worker_loss(std::size_t q, const DenseVector& w) const {
    return loss_only(w, shards_[q]);
  }

  double loss(const DenseVector& w) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < workers(); ++q) acc += weights_[q] * worker_loss(q, w);
    return acc;
  }

 private:
  /// Forward pass only; same math as loss_grad without the backward sweep.
  double loss_only(const DenseVector& w, const std::vector<std::size_t>& rows) const {
    const std::size_t layers = sizes_.size() - 1;
    double loss_acc = 0.0;
    DenseVector buffer_a, buffer_b;
    for (std::size_t row : rows) {
      const double* input = dataset_->row(row);
      std::size_t input_size = sizes_[0];
      std::size_t offset = 0;
      for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t out_size = sizes_[l + 1];
        auto& out = (l % 2 == 0) ? buffer_a : buffer_b;
        out.assign(out_size, 0.0);
        const double* weight = w.data() + offset;
        const double* bias = w.data() + offset + input_size * out_size;
        for (std::size_t o = 0; o < out_size; ++o) {
          double z = bias[o];
          const double* wrow = weight + o * input_size;
          for (std::size_t i = 0; i < input_size; ++i) z += wrow[i] * input[i];
          out[o] = z;
        }
        if (l + 1 < layers)
          for (auto& v : out) v = v > 0.0 ? v : 0.0;
        input = out.data();
        offset += input_size * out_size + out_size;
        input_size = out_size;
      }
      const auto& logits = (layers % 2 == 1) ? buffer_a : buffer_b;
      double max_logit = logits[0];
      for (double v : logits) max_logit = std::max(max_logit, v);
      double sum_exp = 0.0;
      for (double v : logits) sum_exp += std::exp(v - max_logit);
      loss_acc += std::log(sum_exp) + max_logit -
                  logits[static_cast<std::size_t>(dataset_->labels[row])];
    }
    return loss_acc / static_cast<double>(rows.size());
  }

  std::vector<std::size_t> sizes_;
  std::shared_ptr<Dataset> dataset_;
  std::vector<std::vector<std::size_t>> shards_;
  std::vector<double> weights_;
  std::size_t batch_;
  std::size_t d_ = 0;
};

inline std::pair<double, DenseVector> mlp_loss_grad(const MlpProblem& p, const DenseVector& w,
                                                    const std::vector<std::size_t>& batch_rows) {
  return p.loss_grad(w, batch_rows);
}

// ---------------------------------------------------------------------------
// Problem wrapper

class Problem {
 public:
  using Variant = std::variant<QuadraticProblem, LeastSquaresProblem, MlpProblem>;

  explicit Problem(Variant v) : v_(std::move(v)) {}
  Problem(QuadraticProblem p) : v_(std::move(p)) {}
  Problem(LeastSquaresProblem p) : v_(std::move(p)) {}
  Problem(MlpProblem p) : v_(std::move(p)) {}

  std::size_t dim() const {
    return std::visit([](const auto& p) { return p.dim(); }, v_);
  }
  std::size_t workers() const {
    return std::visit([](const auto& p) { return p.workers(); }, v_);
  }
  const std::vector<double>& weights() const {
    return std::visit([](const auto& p) -> const std::vector<double>& { return p.weights(); }, v_);
  }

  bool deterministic() const { return std::holds_alternative<QuadraticProblem>(v_); }

  DenseVector worker_gradient(std::size_t q, const DenseVector& w, Rng& rng) const {
    if (const auto* p = std::get_if<QuadraticProblem>(&v_)) return p->gradient(q, w);
    if (const auto* p = std::get_if<LeastSquaresProblem>(&v_))
      return p->stochastic_gradient(q, w, rng);
    return std::get<MlpProblem>(v_).stochastic_gradient(q, w, rng);
  }

  double loss(const DenseVector& w) const {
    return std::visit([&](const auto& p) { return p.loss(w); }, v_);
  }

  const QuadraticProblem* as_quadratic() const { return std::get_if<QuadraticProblem>(&v_); }
  const LeastSquaresProblem* as_least_squares() const {
    return std::get_if<LeastSquaresProblem>(&v_);
  }
  const MlpProblem* as_mlp() const { return std::get_if<MlpProblem>(&v_); }

 private:
  Variant v_;
};

inline DenseVector stochastic_gradient(const Problem& problem, std::size_t q,
                                       const DenseVector& w, Rng& rng) {
  return problem.worker_gradient(q, w, rng);
}

inline double global_loss(const Problem& problem, const DenseVector& w) {
  return problem.loss(w);
}

/// The distributed quadratic used throughout: d-dimensional, three workers
/// with constant targets 1, 5 and 10, uniform weights.
inline QuadraticProblem toy_quadratic(std::size_t d = 100) {
  return QuadraticProblem::constant_centers(d, {1.0, 5.0, 10.0}, uniform_weights(3));
}

}  // namespace sgsim
