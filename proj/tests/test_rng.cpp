// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include <set>
#include <vector>

#include "doctest.h"
#include "odl/rng.hpp"
#include "oracles.hpp"

using odl::RngStream;

TEST_SUITE("rng") {
  TEST_CASE("philox known answers") {
    // Reference vectors published with the Random123 distribution.
    using B = std::array<std::uint32_t, 4>;
    CHECK(odl::philox4x32_10({0, 0, 0, 0}, {0, 0}) ==
          B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(odl::philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                             {0xffffffff, 0xffffffff}) ==
          B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(odl::philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                             {0xa4093822, 0x299f31d0}) ==
          B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("stream is the philox block sequence") {
    RngStream s(0, 0, 0, 0);
    CHECK(s.next_u64() == 0x6627e8d5e169c58dull);
    CHECK(s.next_u64() == 0xbc57ac4c9b00dbd8ull);
  }

  TEST_CASE("streams are keyed by every coordinate") {
    std::set<std::uint64_t> firsts;
    for (std::uint32_t a = 0; a < 3; ++a)
      for (std::uint32_t b = 0; b < 3; ++b)
        for (std::uint32_t c = 0; c < 3; ++c) firsts.insert(RngStream(9, a, b, c).next_u64());
    CHECK(firsts.size() == 27);
    RngStream x(5, 1, 2, 3), y(5, 1, 2, 3);
    for (int k = 0; k < 100; ++k) CHECK(x.next_u64() == y.next_u64());
  }

  TEST_CASE("uniform and below ranges") {
    RngStream s(1, 2, 3, 4);
    std::vector<std::uint64_t> counts(6, 0);
    for (int k = 0; k < 60000; ++k) {
      const double u = s.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      const auto b = s.below(6);
      REQUIRE(b < 6);
      ++counts[b];
    }
    const auto chi = oracle::chi_square(counts, std::vector<double>(6, 1.0 / 6), 0.001);
    CHECK(chi.accept);
  }

  TEST_CASE("draw_categorical") {
    const std::vector<double> w{0.0, 2.0, 0.0, 1.0};
    CHECK(odl::draw_categorical(w, 0.0) == 1);
    CHECK(odl::draw_categorical(w, 0.66) == 1);
    CHECK(odl::draw_categorical(w, 0.67) == 3);
    CHECK(odl::draw_categorical(w, std::nextafter(1.0, 0.0)) == 3);
    CHECK_THROWS(odl::draw_categorical(std::vector<double>{0.0, 0.0}, 0.5));
  }
}
