// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "odl/rng.hpp"
#include "odl/types.hpp"

namespace odl {

// ---------------------------------------------------------------------------
// Bigram statistics

/// Streaming bigram counts. Transitions never cross a document boundary.
struct BigramCounts {
  std::uint32_t vocab_size = 0;
  /// rows[i][j] = number of times j followed i.
  std::vector<std::unordered_map<Token, std::uint64_t>> rows;
  std::uint64_t total_tokens = 0;
  std::vector<std::uint64_t> unigram;

  std::uint64_t count(Token i, Token j) const;
  std::uint64_t row_total(Token i) const;
};

/// Single-writer streaming fold. Feed tokens in order; call end_document()
/// (or feed kDocumentSeparator) between unrelated texts.
class BigramCounter {
 public:
  explicit BigramCounter(std::uint32_t vocab_size);

  /// Throws InputError carrying the running stream position on an
  /// out-of-range id.
  void add(Token token);
  void add(std::span<const Token> tokens);
  void end_document() { previous_.reset(); }

  /// Adds another counter's totals. Pending document state is not merged.
  void merge(const BigramCounts& other);

  const BigramCounts& counts() const { return counts_; }
  BigramCounts take() { return std::move(counts_); }

 private:
  BigramCounts counts_;
  std::optional<Token> previous_;
  std::uint64_t position_ = 0;
};

BigramCounts count_bigrams(std::span<const Token> stream, std::uint32_t vocab_size);

// ---------------------------------------------------------------------------
// Sparsification

struct Edge {
  Token successor;
  double prob;
  friend bool operator==(const Edge&, const Edge&) = default;
};

using SparseRow = std::vector<Edge>;

/// Smallest k such that the k largest entries of `probs` sum to at least
/// `mass_threshold`.
std::size_t effective_support(std::span<const double> probs, double mass_threshold);

/// Nearest-rank quantile: the ceil(q*n)-th smallest value.
std::size_t nearest_rank(std::vector<std::size_t> values, double q);

struct SparsifyResult {
  std::uint32_t K = 0;
  /// Per-state effective support; 0 marks a state with no outgoing counts
  /// (excluded from the quantile).
  std::vector<std::size_t> k_star;
  /// Truncated, renormalized rows sorted by successor id.
  std::vector<SparseRow> rows;
  std::size_t unigram_fallback_rows = 0;
};

SparsifyResult sparsify(const BigramCounts& counts, double mass_threshold,
                        double percentile);

/// Empirical unigram distribution with add-one smoothing over the vocabulary.
std::vector<double> smoothed_unigram(const BigramCounts& counts);

// ---------------------------------------------------------------------------
// Teleport kernel

struct KernelOptions {
  /// When nu contains zeros, read it as relative counts and add one to every
  /// entry instead of rejecting it.
  bool add_one_smoothing = false;
  /// Permit epsilon = 0 (degenerate kernels for testing and the explicit
  /// no-teleport build). Strict positivity is then not guaranteed.
  bool allow_zero_teleport = false;
};

/// P'(j|i) = (1-eps) * P_topK(j|i) + eps * nu(j). Immutable after
/// construction and safe to share across threads.
class TransitionKernel {
 public:
  TransitionKernel(std::vector<SparseRow> rows, double epsilon,
                   std::vector<double> nu, KernelOptions options = {});

  std::uint32_t vocab_size() const { return vocab_size_; }
  /// Global sparsity level: the longest stored row.
  std::uint32_t sparsity() const { return sparsity_; }
  double epsilon() const { return epsilon_; }
  std::span<const double> nu() const { return nu_; }
  std::span<const double> log_nu() const { return log_nu_; }

  std::span<const Edge> row(Token i) const {
    return {edges_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const Edge> edges() const { return edges_; }

  /// Incoming sparse edges of j as (predecessor, prob), predecessor ascending.
  std::span<const Edge> column(Token j) const {
    return {column_edges_.data() + column_offsets_[j],
            column_offsets_[j + 1] - column_offsets_[j]};
  }

  /// P_topK(j|i), O(log K).
  double sparse_prob(Token i, Token j) const;
  /// P'(j|i), O(log K).
  double prob(Token i, Token j) const {
    return (1.0 - epsilon_) * sparse_prob(i, j) + epsilon_ * nu_[j];
  }
  bool in_support(Token i, Token j) const;

  /// Dense effective row P'(.|i), O(V).
  std::vector<double> effective_row(Token i) const;

  /// Draws j ~ P'(.|i): sparse branch with probability 1-eps, nu otherwise.
  Token sample_next(Token i, RngStream& rng) const;
  Token sample_nu(RngStream& rng) const;

  /// pi^T P' in O(V*K).
  std::vector<double> propagate(std::span<const double> pi) const;

 private:
  std::uint32_t vocab_size_ = 0;
  std::uint32_t sparsity_ = 0;
  double epsilon_ = 0.0;
  std::vector<double> nu_;
  std::vector<double> log_nu_;
  std::vector<double> nu_cdf_;
  std::vector<std::size_t> offsets_;
  std::vector<Edge> edges_;
  std::vector<double> edge_cdf_;
  std::vector<std::size_t> column_offsets_;
  std::vector<Edge> column_edges_;
};

TransitionKernel build_kernel(std::vector<SparseRow> rows, double epsilon,
                              std::vector<double> nu, KernelOptions options = {});

// ---------------------------------------------------------------------------
// Stationary distribution

struct StationaryResult {
  std::vector<double> pi;
  double residual = 0.0;  // || pi^T P' - pi^T ||_1
  std::size_t iterations = 0;
};

/// Power iteration from `init` (uniform when empty). Each step costs O(V*K).
/// Throws ConvergenceError with the final residual on failure.
StationaryResult stationary(const TransitionKernel& kernel, double tol,
                            std::size_t max_iters,
                            std::span<const double> init = {});

struct StationaryCheck {
  std::vector<StationaryResult> runs;  // uniform, nu, point mass, random
  double max_pairwise_l1 = 0.0;
};

/// Runs power iteration from several distinct initializations.
StationaryCheck stationary_agreement(const TransitionKernel& kernel, double tol,
                                     std::size_t max_iters, std::uint64_t seed = 7);

/// Ground-truth chain: kernel plus its initial (stationary) distribution.
class OracleChain {
 public:
  OracleChain(TransitionKernel kernel, std::vector<double> pi0);
  /// Computes pi0 by power iteration.
  explicit OracleChain(TransitionKernel kernel, double tol = 1e-11,
                       std::size_t max_iters = 100000);

  const TransitionKernel& kernel() const { return kernel_; }
  std::span<const double> pi0() const { return pi0_; }
  std::span<const double> log_pi0() const { return log_pi0_; }
  std::uint32_t vocab_size() const { return kernel_.vocab_size(); }

  Token sample_initial(RngStream& rng) const;

 private:
  void index_pi0();

  TransitionKernel kernel_;
  std::vector<double> pi0_;
  std::vector<double> log_pi0_;
  std::vector<double> pi0_cdf_;
};

// ---------------------------------------------------------------------------
// Autoregressive baseline

/// x_1 ~ pi0, x_{u+1} ~ P'(.|x_u). Sequence n uses streams (seed, n, u, 0).
SequenceBatch sample_ar(const OracleChain& chain, std::size_t length,
                        std::size_t count, std::uint64_t seed,
                        unsigned workers = 0);

/// As sample_ar but each conditional is replaced by P'(.|x_u)^beta,
/// renormalized. beta == 1 reproduces sample_ar exactly.
SequenceBatch sample_ar_sharpened(const OracleChain& chain, double beta,
                                  std::size_t length, std::size_t count,
                                  std::uint64_t seed, unsigned workers = 0);

}  // namespace odl
