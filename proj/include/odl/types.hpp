// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace odl {

using Token = std::uint32_t;

/// Document separator in token stream files.
inline constexpr Token kDocumentSeparator = 0xFFFFFFFFu;
/// Mask sentinel inside a diffusion state. Never written to disk.
inline constexpr Token kMask = 0xFFFFFFFEu;

/// N sequences of a common length stored row-major.
class SequenceBatch {
 public:
  SequenceBatch() = default;
  SequenceBatch(std::size_t count, std::size_t length)
      : length_(length), tokens_(count * length, 0) {}
  SequenceBatch(std::size_t length, std::vector<Token> tokens)
      : length_(length), tokens_(std::move(tokens)) {
    if (length_ == 0 ? !tokens_.empty() : tokens_.size() % length_ != 0)
      throw std::invalid_argument("SequenceBatch: token count not a multiple of length");
  }

  std::size_t size() const { return length_ == 0 ? 0 : tokens_.size() / length_; }
  std::size_t length() const { return length_; }
  bool empty() const { return tokens_.empty(); }

  std::span<Token> operator[](std::size_t n) {
    return {tokens_.data() + n * length_, length_};
  }
  std::span<const Token> operator[](std::size_t n) const {
    return {tokens_.data() + n * length_, length_};
  }

  const std::vector<Token>& tokens() const { return tokens_; }

  void append(std::span<const Token> sequence) {
    if (tokens_.empty() && length_ == 0) length_ = sequence.size();
    if (sequence.size() != length_)
      throw std::invalid_argument("SequenceBatch: length mismatch");
    tokens_.insert(tokens_.end(), sequence.begin(), sequence.end());
  }

  friend bool operator==(const SequenceBatch&, const SequenceBatch&) = default;

 private:
  std::size_t length_ = 0;
  std::vector<Token> tokens_;
};

}  // namespace odl
