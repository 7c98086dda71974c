// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include "odl/corpus.hpp"

#include <array>

#include "odl/error.hpp"
#include "odl/wire.hpp"

namespace odl {

void Text8Encoder::feed(std::string_view chunk, std::vector<Token>& out) {
  for (char raw : chunk) {
    const auto c = static_cast<unsigned char>(raw);
    const std::uint64_t pos = offset_++;
    if (c >= 'a' && c <= 'z') {
      out.push_back(static_cast<Token>(c - 'a' + 1));
      last_space_ = false;
      continue;
    }
    if (mode_ == TextMode::kStrict) {
      if (c == ' ') {
        out.push_back(0);
        continue;
      }
      throw InputError("invalid text8 character code " + std::to_string(c), pos);
    }
    if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<Token>(c - 'A' + 1));
      last_space_ = false;
    } else if (!last_space_) {
      out.push_back(0);
      last_space_ = true;
    }
  }
}

std::vector<Token> encode_text8(std::string_view text, TextMode mode) {
  std::vector<Token> ids;
  ids.reserve(text.size());
  Text8Encoder encoder(mode);
  encoder.feed(text, ids);
  return ids;
}

std::string decode_text8(std::span<const Token> ids) {
  std::string text;
  text.reserve(ids.size());
  for (std::size_t u = 0; u < ids.size(); ++u) {
    if (ids[u] >= kText8Vocab) throw InputError("id outside the text8 vocabulary", u);
    text.push_back(ids[u] == 0 ? ' ' : static_cast<char>('a' + ids[u] - 1));
  }
  return text;
}

// ---------------------------------------------------------------------------

void write_token_stream(const std::filesystem::path& path,
                        std::span<const std::vector<Token>> documents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  for (std::size_t d = 0; d < documents.size(); ++d) {
    if (d > 0) wire::put_u32(out, kDocumentSeparator);
    for (Token t : documents[d]) wire::put_u32(out, t);
  }
  if (!out) throw InputError("write failure on " + path.string());
}

void write_token_stream(const std::filesystem::path& path, const SequenceBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (n > 0) wire::put_u32(out, kDocumentSeparator);
    for (Token t : batch[n]) wire::put_u32(out, t);
  }
  if (!out) throw InputError("write failure on " + path.string());
}

TokenStreamReader::TokenStreamReader(const std::filesystem::path& path,
                                     std::uint32_t vocab_size)
    : in_(path, std::ios::binary), vocab_size_(vocab_size), buffer_(1 << 16) {
  if (!in_) throw InputError("cannot open token stream " + path.string());
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
}

bool TokenStreamReader::refill() {
  // Keep a partial trailing field at the front of the buffer.
  const std::size_t carry = filled_ - cursor_;
  for (std::size_t k = 0; k < carry; ++k) buffer_[k] = buffer_[cursor_ + k];
  in_.read(reinterpret_cast<char*>(buffer_.data() + carry),
           static_cast<std::streamsize>(buffer_.size() - carry));
  filled_ = carry + static_cast<std::size_t>(in_.gcount());
  cursor_ = 0;
  return filled_ > carry;
}

std::optional<Token> TokenStreamReader::next() {
  if (filled_ - cursor_ < 4) {
    refill();
    const std::size_t left = filled_ - cursor_;
    if (left == 0) return std::nullopt;
    if (left < 4) throw InputError("malformed token stream: trailing partial id", offset_);
  }
  const Token id = wire::get_u32(buffer_.data() + cursor_);
  if (id != kDocumentSeparator && id >= vocab_size_)
    throw InputError("token id " + std::to_string(id) + " out of range for V=" +
                         std::to_string(vocab_size_),
                     offset_);
  cursor_ += 4;
  offset_ += 4;
  return id;
}

std::optional<std::vector<Token>> TokenStreamReader::next_document() {
  std::vector<Token> doc;
  while (auto id = next()) {
    if (*id == kDocumentSeparator) {
      if (!doc.empty()) return doc;
      continue;
    }
    doc.push_back(*id);
  }
  if (doc.empty()) return std::nullopt;
  return doc;
}

std::vector<std::vector<Token>> load_token_stream(const std::filesystem::path& path,
                                                  std::uint32_t vocab_size) {
  TokenStreamReader reader(path, vocab_size);
  std::vector<std::vector<Token>> docs;
  while (auto doc = reader.next_document()) docs.push_back(std::move(*doc));
  return docs;
}

SequenceBatch load_sequences(const std::filesystem::path& path, std::uint32_t vocab_size,
                             std::size_t length) {
  TokenStreamReader reader(path, vocab_size);
  SequenceBatch batch;
  std::size_t index = 0;
  while (auto doc = reader.next_document()) {
    if (doc->size() != length)
      throw InputError("sequence " + std::to_string(index) + " has length " +
                       std::to_string(doc->size()) + ", expected " + std::to_string(length));
    batch.append(*doc);
    ++index;
  }
  return batch;
}

BigramCounts count_text8_file(const std::filesystem::path& path, TextMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open corpus " + path.string());
  BigramCounter counter(kText8Vocab);
  Text8Encoder encoder(mode);
  std::array<char, 1 << 16> chunk{};
  std::vector<Token> ids;
  while (in) {
    in.read(chunk.data(), chunk.size());
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    ids.clear();
    encoder.feed({chunk.data(), got}, ids);
    counter.add(ids);
  }
  return counter.take();
}

BigramCounts count_token_file(const std::filesystem::path& path, std::uint32_t vocab_size) {
  TokenStreamReader reader(path, vocab_size);
  BigramCounter counter(vocab_size);
  while (auto id = reader.next()) counter.add(*id);
  return counter.take();
}

}  // namespace odl
