// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>

namespace odl {

/// One Philox4x32-10 block.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, sequence, step, lane). Streams never
/// share state, so results do not depend on the order in which workers
/// visit sequences or positions.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint32_t sequence, std::uint32_t step,
            std::uint32_t lane) noexcept
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        counter_{lane, step, sequence, 0} {}

  std::uint64_t next_u64() noexcept {
    if (cursor_ >= 4) refill();
    const std::uint64_t hi = block_[cursor_];
    const std::uint64_t lo = block_[cursor_ + 1];
    cursor_ += 2;
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's nearly-divisionless rejection.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // UniformRandomBitGenerator, for std::shuffle and friends.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() noexcept { return next_u64(); }

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  unsigned cursor_ = 4;
};

/// Index drawn from an unnormalized nonnegative weight vector by linear scan.
/// `u` is uniform in [0,1). Falls back to the last positive entry when
/// rounding pushes the target past the running sum.
std::size_t draw_categorical(std::span<const double> weights, double u);

}  // namespace odl
