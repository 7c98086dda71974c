// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include <random>
#include <vector>

#include "doctest.h"
#include "odl/corpus.hpp"
#include "odl/error.hpp"
#include "support.hpp"

using namespace odl;
using testing_support::le32;
using testing_support::TempDir;

TEST_SUITE("corpus") {
  TEST_CASE("text8 alphabet") {
    CHECK(encode_text8("abc") == std::vector<Token>{1, 2, 3});
    CHECK(encode_text8(" ") == std::vector<Token>{0});
    CHECK(encode_text8("z a") == std::vector<Token>{26, 0, 1});
    CHECK(decode_text8(std::vector<Token>{8, 9, 0, 26}) == "hi z");
    CHECK_THROWS_AS(decode_text8(std::vector<Token>{27}), InputError);
  }

  TEST_CASE("strict mode reports the offending byte") {
    try {
      encode_text8("ab,c", TextMode::kStrict);
      FAIL("expected InputError");
    } catch (const InputError& e) {
      CHECK(e.position() == 2);
    }
    CHECK_THROWS_AS(encode_text8("Abc", TextMode::kStrict), InputError);
  }

  TEST_CASE("lenient mode folds case and collapses separators") {
    CHECK(encode_text8("Hi,  there!", TextMode::kLenient) == encode_text8("hi there ", TextMode::kStrict));
  }

  TEST_CASE("round trip of random text") {
    std::mt19937 gen(4);
    std::string s;
    for (int k = 0; k < 5000; ++k) {
      const int c = static_cast<int>(gen() % 27);
      s.push_back(c == 0 ? ' ' : static_cast<char>('a' + c - 1));
    }
    CHECK(decode_text8(encode_text8(s)) == s);
  }

  TEST_CASE("separator splits documents") {
    TempDir dir;
    const auto p = dir / "s.bin";
    testing_support::write_bytes(p, le32(0) + le32(1) + le32(kDocumentSeparator) + le32(2));
    const auto docs = load_token_stream(p, 3);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0] == std::vector<Token>{0, 1});
    CHECK(docs[1] == std::vector<Token>{2});
    const auto c = count_token_file(p, 3);
    CHECK(c.count(0, 1) == 1);
    CHECK(c.count(1, 2) == 0);
  }

  TEST_CASE("id equal to V fails at its byte offset") {
    TempDir dir;
    const auto p = dir / "bad.bin";
    testing_support::write_bytes(p, le32(0) + le32(1) + le32(2) + le32(3));
    try {
      load_token_stream(p, 3);
      FAIL("expected InputError");
    } catch (const InputError& e) {
      CHECK(e.position() == 12);
    }
  }

  TEST_CASE("trailing partial id is malformed") {
    TempDir dir;
    const auto p = dir / "partial.bin";
    testing_support::write_bytes(p, le32(0) + le32(1) + std::string("\x01\x00", 2));
    CHECK_THROWS_AS(load_token_stream(p, 3), InputError);
  }

  TEST_CASE("a million ids round-trip") {
    TempDir dir;
    const auto p = dir / "big.bin";
    std::mt19937_64 gen(11);
    std::vector<std::vector<Token>> docs(1);
    for (int k = 0; k < 1000000; ++k) docs[0].push_back(static_cast<Token>(gen() % 50000));
    write_token_stream(p, docs);
    CHECK(std::filesystem::file_size(p) == 4000000u);
    CHECK(load_token_stream(p, 50000) == docs);
  }

  TEST_CASE("sequence batches and fixed-length loading") {
    TempDir dir;
    const auto p = dir / "batch.bin";
    SequenceBatch b(3, std::vector<Token>{0, 1, 2, 2, 1, 0});
    write_token_stream(p, b);
    CHECK(load_sequences(p, 3, 3) == b);
    CHECK_THROWS_AS(load_sequences(p, 3, 4), InputError);
  }

  TEST_CASE("text8 file counting matches in-memory counting") {
    TempDir dir;
    const auto p = dir / "t.txt";
    const std::string text = "the cat sat on the mat and the dog ate the hat";
    testing_support::write_bytes(p, text);
    const auto a = count_text8_file(p, TextMode::kStrict);
    const auto b = count_bigrams(encode_text8(text), kText8Vocab);
    CHECK(a.total_tokens == b.total_tokens);
    CHECK(a.unigram == b.unigram);
    for (Token i = 0; i < kText8Vocab; ++i)
      for (Token j = 0; j < kText8Vocab; ++j) CHECK(a.count(i, j) == b.count(i, j));
  }
}
