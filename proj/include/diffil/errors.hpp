// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace diffil {

/// Invalid configuration: bad shapes, unknown keys, out-of-range hyperparameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke an API precondition (non-scalar backward, length mismatch, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A forward computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, std::int64_t node, std::string detail = {})
      : std::runtime_error("non-finite value in op '" + op + "' (node " +
                           std::to_string(node) + ")" +
                           (detail.empty() ? "" : ": " + detail)),
        op_(std::move(op)),
        node_(node) {}

  const std::string& op() const { return op_; }
  std::int64_t node() const { return node_; }

 private:
  std::string op_;
  std::int64_t node_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scripted expert failed its own success predicate.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training hit a non-finite loss or gradient and stopped.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::int64_t iteration, const std::string& why)
      : std::runtime_error("training aborted at iteration " + std::to_string(iteration) + ": " + why),
        iteration_(iteration) {}

  std::int64_t iteration() const { return iteration_; }

 private:
  std::int64_t iteration_;
};

}  // namespace diffil
