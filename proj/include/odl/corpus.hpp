// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odl/kernel.hpp"
#include "odl/types.hpp"

namespace odl {

// ---------------------------------------------------------------------------
// text8 character vocabulary: ' ' -> 0, 'a'..'z' -> 1..26.

inline constexpr std::uint32_t kText8Vocab = 27;

enum class TextMode {
  kStrict,   // only lowercase letters and space; anything else is an error
  kLenient,  // lowercase, non-letters become space, runs of spaces collapse
};

std::vector<Token> encode_text8(std::string_view text, TextMode mode = TextMode::kStrict);
std::string decode_text8(std::span<const Token> ids);

/// Streaming variant of lenient/strict encoding that carries the collapsed
/// space state across chunks of a large file.
class Text8Encoder {
 public:
  explicit Text8Encoder(TextMode mode) : mode_(mode) {}
  void feed(std::string_view chunk, std::vector<Token>& out);

 private:
  TextMode mode_;
  bool last_space_ = false;
  std::uint64_t offset_ = 0;
};

// ---------------------------------------------------------------------------
// Binary token streams: u32 little-endian ids, kDocumentSeparator between
// documents. A file whose size is not a multiple of four is malformed.

void write_token_stream(const std::filesystem::path& path,
                        std::span<const std::vector<Token>> documents);
/// Each sequence of the batch is one document.
void write_token_stream(const std::filesystem::path& path, const SequenceBatch& batch);

/// Validating reader. Ids are checked against vocab_size as they are read;
/// failures carry the byte offset of the offending field.
class TokenStreamReader {
 public:
  TokenStreamReader(const std::filesystem::path& path, std::uint32_t vocab_size);

  /// Next id (possibly kDocumentSeparator); nullopt at end of file.
  std::optional<Token> next();
  /// Next document, or nullopt at end. Empty documents are skipped.
  std::optional<std::vector<Token>> next_document();

  std::uint32_t vocab_size() const { return vocab_size_; }
  std::uint64_t byte_offset() const { return offset_; }

 private:
  bool refill();

  std::ifstream in_;
  std::uint32_t vocab_size_;
  std::vector<unsigned char> buffer_;
  std::size_t cursor_ = 0;
  std::size_t filled_ = 0;
  std::uint64_t offset_ = 0;
};

/// Reads all documents of a token stream.
std::vector<std::vector<Token>> load_token_stream(const std::filesystem::path& path,
                                                  std::uint32_t vocab_size);

/// Reads a token stream as fixed-length sequences (every document must have
/// length `length`).
SequenceBatch load_sequences(const std::filesystem::path& path, std::uint32_t vocab_size,
                             std::size_t length);

/// Streams a corpus file into bigram counts with bounded memory.
BigramCounts count_text8_file(const std::filesystem::path& path, TextMode mode);
BigramCounts count_token_file(const std::filesystem::path& path, std::uint32_t vocab_size);

}  // namespace odl
