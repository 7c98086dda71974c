// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace odl {

/// Malformed or out-of-range input. `position` is the token index or byte
/// offset of the offending element when one exists.
class InputError : public std::runtime_error {
 public:
  InputError(const std::string& what, std::uint64_t position)
      : std::runtime_error(what + " (at " + std::to_string(position) + ")"),
        position_(position), has_position_(true) {}
  explicit InputError(const std::string& what) : std::runtime_error(what) {}

  std::uint64_t position() const { return position_; }
  bool has_position() const { return has_position_; }

 private:
  std::uint64_t position_ = 0;
  bool has_position_ = false;
};

/// Invalid sampler, sweep or kernel-construction parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical invariant was violated (all-zero message row and the like).
class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace odl
