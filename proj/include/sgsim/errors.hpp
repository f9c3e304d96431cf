// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgsim {

/// Thrown when a training run produces a non-finite loss or parameter.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long step, const std::string& what_arg)
      : std::runtime_error("divergence at step " + std::to_string(step) + ": " + what_arg),
        step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Thrown by dataset/config parsers. Carries a byte offset or line number
/// so the CLI can point at the failing position.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string file, std::size_t position, const std::string& what_arg)
      : std::runtime_error(file + " @" + std::to_string(position) + ": " + what_arg),
        file_(std::move(file)),
        position_(position) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t position() const noexcept { return position_; }

 private:
  std::string file_;
  std::size_t position_;
};

/// Configuration that fails validation before a run starts.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what_arg)
      : std::runtime_error("config field '" + field + "': " + what_arg), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace sgsim
