// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "odl/kernel.hpp"
#include "odl/types.hpp"

namespace odl {

/// Diffusion latent state: tokens over [0, V) plus kMask.
class MaskedSequence {
 public:
  MaskedSequence() = default;
  /// Throws InputError at the first id that is neither < V nor kMask.
  MaskedSequence(std::vector<Token> tokens, std::uint32_t vocab_size);

  static MaskedSequence fully_masked(std::size_t length, std::uint32_t vocab_size);

  std::size_t size() const { return tokens_.size(); }
  std::uint32_t vocab_size() const { return vocab_size_; }
  Token operator[](std::size_t u) const { return tokens_[u]; }
  bool is_masked(std::size_t u) const { return tokens_[u] == kMask; }
  std::span<const Token> tokens() const { return tokens_; }

  std::size_t mask_count() const;
  /// Positions u with tokens[u] != kMask, ascending.
  std::vector<std::size_t> revealed_set() const;

  void reveal(std::size_t u, Token v);
  void mask(std::size_t u) { tokens_[u] = kMask; }

  friend bool operator==(const MaskedSequence&, const MaskedSequence&) = default;

 private:
  std::vector<Token> tokens_;
  std::uint32_t vocab_size_ = 0;
};

/// Row-major T x V matrix of doubles.
class LogMatrix {
 public:
  LogMatrix() = default;
  LogMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<double> operator[](std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> operator[](std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(rows * cols);
  }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Forward and backward log messages. Forward rows are normalized and
/// log_z[t] holds the log normalizer of step t (their sum is log p(E)).
/// Backward rows are max-shifted; log_beta_shift[t] records the shift.
struct MessageLattice {
  LogMatrix log_alpha;
  LogMatrix log_beta;
  std::vector<double> log_z;
  std::vector<double> log_beta_shift;

  /// log p(E) under the chain.
  double log_evidence() const;
};

/// Oracle denoiser output: per-position log posterior marginals. Revealed
/// rows are exact deltas (log 0 elsewhere).
class PosteriorMarginals {
 public:
  PosteriorMarginals() = default;
  explicit PosteriorMarginals(LogMatrix log_gamma) : log_gamma_(std::move(log_gamma)) {}

  std::size_t length() const { return log_gamma_.rows(); }
  std::size_t vocab_size() const { return log_gamma_.cols(); }
  std::span<const double> log_row(std::size_t u) const { return log_gamma_[u]; }
  /// exp of the log row.
  std::vector<double> row(std::size_t u) const;
  double prob(std::size_t u, Token v) const;

  LogMatrix& log_gamma() { return log_gamma_; }
  const LogMatrix& log_gamma() const { return log_gamma_; }

 private:
  LogMatrix log_gamma_;
};

MessageLattice forward_pass(const OracleChain& chain, const MaskedSequence& z);
MessageLattice backward_pass(const OracleChain& chain, const MaskedSequence& z);
PosteriorMarginals smooth(const OracleChain& chain, const MaskedSequence& z);

/// Reusable workspace for repeated smoothing over one chain. Not shareable
/// between threads; give each worker its own.
class Smoother {
 public:
  explicit Smoother(const OracleChain& chain) : chain_(&chain) {}

  /// Runs both passes and fills `out`. Cost O(T*V*K).
  void smooth(const MaskedSequence& z, PosteriorMarginals& out);
  const MessageLattice& lattice() const { return lattice_; }

  const OracleChain& chain() const { return *chain_; }

 private:
  void forward(const MaskedSequence& z);
  void backward(const MaskedSequence& z);
  friend MessageLattice forward_pass(const OracleChain&, const MaskedSequence&);
  friend MessageLattice backward_pass(const OracleChain&, const MaskedSequence&);

  const OracleChain* chain_;
  MessageLattice lattice_;
  std::vector<double> weights_;
  std::vector<double> accum_;
};

// ---------------------------------------------------------------------------
// Reference implementations (test oracles and the `verify` command)

/// Largest enumeration brute_force_posterior accepts.
inline constexpr double kMaxEnumeration = 1e7;

/// Exact marginals by summing p0 over every completion consistent with the
/// revealed tokens. Throws ConfigError with the completion count when it
/// exceeds kMaxEnumeration.
PosteriorMarginals brute_force_posterior(const OracleChain& chain, const MaskedSequence& z);

/// Textbook scaled forward-backward on the materialized dense V x V matrix,
/// O(T*V^2).
PosteriorMarginals dense_smooth(const OracleChain& chain, const MaskedSequence& z);

/// Largest |a - b| over entries of two log-marginal tables. Entries that are
/// -inf in both count as equal; -inf in only one yields +inf.
double max_log_deviation(const PosteriorMarginals& a, const PosteriorMarginals& b);
/// Largest |exp(a) - exp(b)|.
double max_prob_deviation(const PosteriorMarginals& a, const PosteriorMarginals& b);

/// Text matrix dump of (log_alpha, log_beta, log_gamma) for golden files.
void dump_lattice(std::ostream& out, const MessageLattice& lattice,
                  const PosteriorMarginals& gamma);

}  // namespace odl
