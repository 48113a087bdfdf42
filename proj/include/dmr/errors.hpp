#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dmr {

// Precondition violations on public operations (bad shapes, all-zero masks,
// out-of-range labels, empty batches).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Configuration failed validation; maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hard-set selection was asked for with fewer observed combinations than V.
class InsufficientStatistics : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A channel with zero L2 norm cannot take part in a cosine distance.
class DegenerateChannel : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// The metric is not defined for the given inputs (e.g. ACER on one class).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Checkpoint checksum or framing mismatch; maps to CLI exit code 4.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint does not match the requested architecture or config hash.
class IncompatibleCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss during training; maps to CLI exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t step, int epoch, const std::string& what)
      : std::runtime_error(what), step_(step), epoch_(epoch) {}

  std::uint64_t step() const noexcept { return step_; }
  int epoch() const noexcept { return epoch_; }

 private:
  std::uint64_t step_;
  int epoch_;
};

}  // namespace dmr
