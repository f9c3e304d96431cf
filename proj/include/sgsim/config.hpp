// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration: JSON in, validated and fully resolved struct
// out. The resolved form (defaults applied, K values computed) is echoed
// verbatim into every output for provenance.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgsim/compression.hpp"
#include "sgsim/dataset.hpp"
#include "sgsim/errors.hpp"
#include "sgsim/metrics.hpp"
#include "sgsim/problems.hpp"
#include "sgsim/protocol.hpp"
#include "sgsim/trainer.hpp"

namespace sgsim {

struct InitSpec {
  enum class Kind { zeros, normal };
  Kind kind = Kind::zeros;
  double mean = 0.0;
  double stddev = 1.0;
};

struct DatasetSpec {
  enum class Source { synthetic, csv, idx };
  Source source = Source::synthetic;
  std::string path;    // csv
  std::string images;  // idx
  std::string labels;  // idx
  std::size_t n = 0;   // synthetic
  std::size_t features = 0;
  std::size_t classes = 0;
};

struct ProblemSpec {
  enum class Kind { quadratic, least_squares, mlp };
  Kind kind = Kind::quadratic;
  std::size_t d = 0;                          // quadratic / least_squares
  std::vector<double> center_levels;          // quadratic, one per worker
  std::size_t samples_per_worker = 0;         // least_squares
  double noise_std = 0.0;                     // least_squares
  std::size_t batch = 1;                      // least_squares / mlp
  std::vector<std::size_t> layers;            // mlp
  DatasetSpec dataset;                        // mlp

  std::size_t param_count() const {
    if (kind != Kind::mlp) return d;
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l)
      total += layers[l] * layers[l + 1] + layers[l + 1];
    return total;
  }
};

struct CommBase {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
};

struct ExperimentConfig {
  Mode mode = Mode::vanilla;
  std::uint64_t seed = 0;
  long steps = 0;   // resolved; when epochs were given, steps = epochs * steps_per_epoch
  long epochs = 0;  // 0 when steps were given directly
  std::size_t workers = 1;
  std::vector<double> weights;  // resolved, sums to one
  ProblemSpec problem;
  std::size_t k_uplink = 0;    // resolved against d; 0 means identity (vanilla)
  std::size_t k_downlink = 0;  // resolved; 0 when there is no downlink compressor
  Schedule schedule = Schedule::constant(0.1);
  InitSpec init;
  std::optional<CommBase> comm;
  long snapshot_step = 300;
  long steps_per_epoch = 0;  // resolved
  std::string output_dir = "out";
};

namespace cfg_detail {

using nlohmann::json;

template <typename T>
T require(const json& j, const std::string& field) {
  if (!j.contains(field)) throw ConfigError(field, "missing");
  try {
    return j.at(field).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

template <typename T>
T value_or(const json& j, const std::string& field, T fallback) {
  if (!j.contains(field)) return fallback;
  try {
    return j.at(field).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

inline Mode parse_mode(const std::string& s) {
  if (s == "vanilla") return Mode::vanilla;
  if (s == "unidirectional") return Mode::unidirectional;
  if (s == "bidirectional") return Mode::bidirectional;
  throw ConfigError("mode", "expected vanilla|unidirectional|bidirectional, got '" + s + "'");
}

inline std::size_t parse_k(const json& j, const std::string& field, std::size_t d) {
  if (j.contains("k")) {
    const auto k = require<std::size_t>(j, "k");
    if (k < 1 || k > d)
      throw ConfigError(field + ".k", "must be in [1, " + std::to_string(d) + "]");
    return k;
  }
  if (j.contains("sparsity")) {
    const auto fraction = require<double>(j, "sparsity");
    try {
      return k_from_sparsity(d, fraction);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(field + ".sparsity", e.what());
    }
  }
  throw ConfigError(field, "need either k or sparsity");
}

}  // namespace cfg_detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using cfg_detail::require;
  using cfg_detail::value_or;

  ExperimentConfig cfg;
  cfg.mode = cfg_detail::parse_mode(require<std::string>(j, "mode"));
  cfg.seed = require<std::uint64_t>(j, "seed");
  cfg.workers = require<std::size_t>(j, "workers");
  if (cfg.workers < 1) throw ConfigError("workers", "must be >= 1");

  if (j.contains("weights")) {
    cfg.weights = require<std::vector<double>>(j, "weights");
    if (cfg.weights.size() != cfg.workers) throw ConfigError("weights", "need one weight per worker");
    double sum = 0.0;
    for (double p : cfg.weights) {
      if (!(p > 0.0)) throw ConfigError("weights", "weights must be > 0");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("weights", "weights must sum to 1");
  } else {
    cfg.weights = uniform_weights(cfg.workers);
  }

  if (!j.contains("problem")) throw ConfigError("problem", "missing");
  const auto& pj = j.at("problem");
  const auto kind = require<std::string>(pj, "kind");
  if (kind == "quadratic") {
    cfg.problem.kind = ProblemSpec::Kind::quadratic;
    cfg.problem.d = require<std::size_t>(pj, "d");
    cfg.problem.center_levels = value_or<std::vector<double>>(pj, "center_levels", {1.0, 5.0, 10.0});
    if (cfg.problem.center_levels.size() != cfg.workers)
      throw ConfigError("problem.center_levels", "need one target level per worker");
  } else if (kind == "least_squares") {
    cfg.problem.kind = ProblemSpec::Kind::least_squares;
    cfg.problem.d = require<std::size_t>(pj, "d");
    cfg.problem.samples_per_worker = value_or<std::size_t>(pj, "samples_per_worker", 6);
    cfg.problem.noise_std = value_or<double>(pj, "noise_std", 0.1);
    cfg.problem.batch = value_or<std::size_t>(pj, "batch", 2);
    if (cfg.problem.batch < 1 || cfg.problem.batch > cfg.problem.samples_per_worker)
      throw ConfigError("problem.batch", "must be in [1, samples_per_worker]");
  } else if (kind == "mlp") {
    cfg.problem.kind = ProblemSpec::Kind::mlp;
    cfg.problem.layers = require<std::vector<std::size_t>>(pj, "layers");
    if (cfg.problem.layers.size() < 2) throw ConfigError("problem.layers", "need >= 2 sizes");
    cfg.problem.batch = value_or<std::size_t>(pj, "batch", 10);
    if (!pj.contains("dataset")) throw ConfigError("problem.dataset", "missing");
    const auto& dj = pj.at("dataset");
    const auto source = require<std::string>(dj, "source");
    if (source == "synthetic") {
      cfg.problem.dataset.source = DatasetSpec::Source::synthetic;
      cfg.problem.dataset.n = require<std::size_t>(dj, "n");
      cfg.problem.dataset.features = require<std::size_t>(dj, "features");
      cfg.problem.dataset.classes = value_or<std::size_t>(dj, "classes", 10);
    } else if (source == "csv") {
      cfg.problem.dataset.source = DatasetSpec::Source::csv;
      cfg.problem.dataset.path = require<std::string>(dj, "path");
    } else if (source == "idx") {
      cfg.problem.dataset.source = DatasetSpec::Source::idx;
      cfg.problem.dataset.images = require<std::string>(dj, "images");
      cfg.problem.dataset.labels = require<std::string>(dj, "labels");
    } else {
      throw ConfigError("problem.dataset.source", "expected synthetic|csv|idx");
    }
  } else {
    throw ConfigError("problem.kind", "expected quadratic|least_squares|mlp, got '" + kind + "'");
  }

  const std::size_t d = cfg.problem.param_count();
  if (d < 1) throw ConfigError("problem", "parameter count must be >= 1");

  if (cfg.mode != Mode::vanilla) {
    if (!j.contains("uplink")) throw ConfigError("uplink", "missing for compressed mode");
    cfg.k_uplink = cfg_detail::parse_k(j.at("uplink"), "uplink", d);
    if (cfg.mode == Mode::bidirectional) {
      cfg.k_downlink =
          j.contains("downlink") ? cfg_detail::parse_k(j.at("downlink"), "downlink", d) : cfg.k_uplink;
    }
  }

  if (!j.contains("schedule")) throw ConfigError("schedule", "missing");
  const auto& sj = j.at("schedule");
  const auto skind = require<std::string>(sj, "kind");
  const auto alpha0 = require<double>(sj, "alpha0");
  if (!(alpha0 > 0.0)) throw ConfigError("schedule.alpha0", "must be > 0");
  if (skind == "constant") {
    cfg.schedule = Schedule::constant(alpha0);
  } else if (skind == "inverse_poly") {
    const auto theta = require<double>(sj, "theta");
    if (!(theta > 0.5) || theta > 1.0)
      throw ConfigError("schedule.theta", "must be in (1/2, 1]");
    cfg.schedule = Schedule::inverse_poly(alpha0, theta);
  } else {
    throw ConfigError("schedule.kind", "expected constant|inverse_poly");
  }

  if (j.contains("init")) {
    const auto& ij = j.at("init");
    const auto ikind = require<std::string>(ij, "kind");
    if (ikind == "zeros") {
      cfg.init.kind = InitSpec::Kind::zeros;
    } else if (ikind == "normal") {
      cfg.init.kind = InitSpec::Kind::normal;
      cfg.init.mean = value_or<double>(ij, "mean", 0.0);
      cfg.init.stddev = value_or<double>(ij, "std", 1.0);
    } else {
      throw ConfigError("init.kind", "expected zeros|normal");
    }
  } else if (cfg.problem.kind == ProblemSpec::Kind::quadratic) {
    cfg.init = {InitSpec::Kind::normal, 20.0, 1.0};
  }

  // epoch/step resolution
  if (cfg.problem.kind == ProblemSpec::Kind::mlp) {
    std::size_t n_samples = cfg.problem.dataset.n;
    if (cfg.problem.dataset.source != DatasetSpec::Source::synthetic) n_samples = 0;
    const std::size_t shard = n_samples > 0 ? n_samples / cfg.workers : 0;
    if (shard > 0) cfg.steps_per_epoch = static_cast<long>(shard / cfg.problem.batch);
  }
  if (cfg.steps_per_epoch == 0)
    cfg.steps_per_epoch = value_or<long>(j, "steps_per_epoch", 100);
  if (cfg.steps_per_epoch < 1) throw ConfigError("steps_per_epoch", "must be >= 1");

  if (j.contains("steps")) {
    cfg.steps = require<long>(j, "steps");
  } else if (j.contains("epochs")) {
    cfg.epochs = require<long>(j, "epochs");
    if (cfg.epochs < 1) throw ConfigError("epochs", "must be >= 1");
    cfg.steps = cfg.epochs * cfg.steps_per_epoch;
  } else {
    throw ConfigError("steps", "need steps or epochs");
  }
  if (cfg.steps < 1) throw ConfigError("steps", "must be >= 1");

  if (j.contains("comm")) {
    const auto& cj = j.at("comm");
    CommBase comm;
    comm.alpha1 = value_or<double>(cj, "alpha1", 0.0);
    comm.alpha2 = value_or<double>(cj, "alpha2", 0.0);
    comm.beta1 = value_or<double>(cj, "beta1", 0.0);
    comm.beta2 = value_or<double>(cj, "beta2", 0.0);
    if (comm.alpha1 < 0 || comm.alpha2 < 0 || comm.beta1 < 0 || comm.beta2 < 0)
      throw ConfigError("comm", "parameters must be non-negative");
    cfg.comm = comm;
  }

  cfg.snapshot_step = value_or<long>(j, "snapshot_step", 300);
  cfg.output_dir = value_or<std::string>(j, "output_dir", "out");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("json parse error: ") + e.what());
  }
  return parse_config(j);
}

/// Resolved-config echo, embedded in summary.json.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["mode"] = mode_name(cfg.mode);
  j["seed"] = cfg.seed;
  j["steps"] = cfg.steps;
  if (cfg.epochs > 0) j["epochs"] = cfg.epochs;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["workers"] = cfg.workers;
  j["weights"] = cfg.weights;

  nlohmann::json pj;
  switch (cfg.problem.kind) {
    case ProblemSpec::Kind::quadratic:
      pj["kind"] = "quadratic";
      pj["d"] = cfg.problem.d;
      pj["center_levels"] = cfg.problem.center_levels;
      break;
    case ProblemSpec::Kind::least_squares:
      pj["kind"] = "least_squares";
      pj["d"] = cfg.problem.d;
      pj["samples_per_worker"] = cfg.problem.samples_per_worker;
      pj["noise_std"] = cfg.problem.noise_std;
      pj["batch"] = cfg.problem.batch;
      break;
    case ProblemSpec::Kind::mlp:
      pj["kind"] = "mlp";
      pj["layers"] = cfg.problem.layers;
      pj["batch"] = cfg.problem.batch;
      switch (cfg.problem.dataset.source) {
        case DatasetSpec::Source::synthetic:
          pj["dataset"] = {{"source", "synthetic"},
                           {"n", cfg.problem.dataset.n},
                           {"features", cfg.problem.dataset.features},
                           {"classes", cfg.problem.dataset.classes}};
          break;
        case DatasetSpec::Source::csv:
          pj["dataset"] = {{"source", "csv"}, {"path", cfg.problem.dataset.path}};
          break;
        case DatasetSpec::Source::idx:
          pj["dataset"] = {{"source", "idx"},
                           {"images", cfg.problem.dataset.images},
                           {"labels", cfg.problem.dataset.labels}};
          break;
      }
      break;
  }
  j["problem"] = pj;
  j["d"] = cfg.problem.param_count();

  if (cfg.k_uplink > 0) j["uplink"] = {{"k", cfg.k_uplink}};
  if (cfg.k_downlink > 0) j["downlink"] = {{"k", cfg.k_downlink}};

  if (cfg.schedule.kind == ScheduleKind::constant) {
    j["schedule"] = {{"kind", "constant"}, {"alpha0", cfg.schedule.alpha0}};
  } else {
    j["schedule"] = {{"kind", "inverse_poly"},
                     {"alpha0", cfg.schedule.alpha0},
                     {"theta", cfg.schedule.theta}};
  }

  if (cfg.problem.kind != ProblemSpec::Kind::mlp) {
    if (cfg.init.kind == InitSpec::Kind::zeros) {
      j["init"] = {{"kind", "zeros"}};
    } else {
      j["init"] = {{"kind", "normal"}, {"mean", cfg.init.mean}, {"std", cfg.init.stddev}};
    }
  }

  if (cfg.comm) {
    j["comm"] = {{"alpha1", cfg.comm->alpha1},
                 {"alpha2", cfg.comm->alpha2},
                 {"beta1", cfg.comm->beta1},
                 {"beta2", cfg.comm->beta2}};
  }
  j["snapshot_step"] = cfg.snapshot_step;
  j["output_dir"] = cfg.output_dir;
  return j;
}

// ---------------------------------------------------------------------------
// Problem and start-point construction

inline Problem build_problem(const ExperimentConfig& cfg) {
  const Rng base(cfg.seed);
  switch (cfg.problem.kind) {
    case ProblemSpec::Kind::quadratic:
      return Problem(QuadraticProblem::constant_centers(cfg.problem.d, cfg.problem.center_levels,
                                                        cfg.weights));
    case ProblemSpec::Kind::least_squares:
      return Problem(LeastSquaresProblem::synthetic(cfg.problem.d, cfg.workers,
                                                    cfg.problem.samples_per_worker,
                                                    cfg.problem.batch, cfg.problem.noise_std,
                                                    base.split(0x70726f62ULL)));
    case ProblemSpec::Kind::mlp: {
      Dataset ds;
      switch (cfg.problem.dataset.source) {
        case DatasetSpec::Source::synthetic:
          ds = make_blob_dataset(cfg.problem.dataset.n, cfg.problem.dataset.features,
                                 cfg.problem.dataset.classes, base.split(0x64617461ULL));
          break;
        case DatasetSpec::Source::csv:
          ds = load_dataset(cfg.problem.dataset.path, DatasetFormat::csv);
          break;
        case DatasetSpec::Source::idx:
          ds = load_idx(cfg.problem.dataset.images, cfg.problem.dataset.labels);
          break;
      }
      auto shards = partition_indices(ds.n, cfg.workers, base.split(0x70617274ULL));
      return Problem(MlpProblem(cfg.problem.layers, std::move(ds), std::move(shards), cfg.weights,
                                cfg.problem.batch));
    }
  }
  throw ConfigError("problem.kind", "unreachable");
}

inline DenseVector initial_point(const ExperimentConfig& cfg, const Problem& problem) {
  Rng rng = Rng(cfg.seed).split(0x696e6974ULL);
  if (const auto* mlp = problem.as_mlp()) return mlp->init_params(rng);
  DenseVector w0(problem.dim(), 0.0);
  if (cfg.init.kind == InitSpec::Kind::normal) {
    for (auto& v : w0) v = rng.normal(cfg.init.mean, cfg.init.stddev);
  }
  return w0;
}

inline RunParams run_params_from_config(const ExperimentConfig& cfg) {
  RunParams params;
  params.mode = cfg.mode;
  params.schedule = cfg.schedule;
  params.steps = cfg.steps;
  params.seed = cfg.seed;
  params.snapshot_step = cfg.snapshot_step;
  if (cfg.mode != Mode::vanilla) params.uplink = CompressorSpec::top_k(cfg.k_uplink);
  if (cfg.mode == Mode::bidirectional) params.downlink = CompressorSpec::top_k(cfg.k_downlink);
  return params;
}

}  // namespace sgsim
