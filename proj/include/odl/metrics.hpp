// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "odl/kernel.hpp"
#include "odl/types.hpp"

namespace odl {

/// Empirical first-order transition counts over a batch of sequences.
/// Mergeable: stats of a concatenated batch equal the merge of the parts.
class TransitionStats {
 public:
  explicit TransitionStats(std::uint32_t vocab_size = 0);

  /// Adds every adjacent pair of one sequence. Throws InputError with the
  /// position of a residual mask or out-of-range id.
  void accumulate(std::span<const Token> sequence);
  void accumulate(const SequenceBatch& batch);
  void merge(const TransitionStats& other);

  std::uint32_t vocab_size() const { return vocab_size_; }
  std::uint64_t count(Token i, Token j) const;
  std::uint64_t row_total(Token i) const { return row_totals_[i]; }
  /// Sum of all counts: N (T - 1) for equal-length batches.
  std::uint64_t total() const { return total_; }
  std::uint64_t sequences() const { return sequences_; }
  /// Number of distinct (i, j) with a positive count.
  std::size_t distinct() const;

  /// pi_hat(i) = row_total(i) / total().
  std::vector<double> pi_hat() const;

  /// Observed successors of i, ascending, with counts.
  std::vector<std::pair<Token, std::uint64_t>> row(Token i) const;

 private:
  std::uint32_t vocab_size_ = 0;
  std::vector<std::unordered_map<Token, std::uint64_t>> rows_;
  std::vector<std::uint64_t> row_totals_;
  std::uint64_t total_ = 0;
  std::uint64_t sequences_ = 0;
};

TransitionStats accumulate(const SequenceBatch& batch, std::uint32_t vocab_size);

/// -sum_i pi_hat(i) sum_j p_hat(j|i) log P'(j|i).
double nll_rate(const TransitionStats& stats, const TransitionKernel& kernel);
/// sum_i pi_hat(i) KL(p_hat(.|i) || P'(.|i)); zero-count cells contribute 0.
double kl_rate(const TransitionStats& stats, const TransitionKernel& kernel);
/// sum_i pi_hat(i) TV(p_hat(.|i), P'(.|i)); the teleport tail outside the
/// observed and sparse supports is summed analytically.
double tv_rate(const TransitionStats& stats, const TransitionKernel& kernel);
/// sum_i pi_hat(i) H(p_hat(.|i)).
double entropy_rate(const TransitionStats& stats);

struct TransitionRates {
  double nll = 0.0;
  double kl = 0.0;
  double tv = 0.0;
  double entropy = 0.0;
};

/// All four rates in one pass (same terms as the individual functions).
TransitionRates transition_rates(const TransitionStats& stats, const TransitionKernel& kernel);

struct CoverageMetrics {
  /// Mass of p_hat outside the top-K sparse support (teleport excluded).
  double other_mass = 0.0;
  /// Distinct transition types over all observed transitions, pooled.
  double support_fraction = 0.0;
};

CoverageMetrics coverage_metrics(const TransitionStats& stats, const TransitionKernel& kernel);

/// How n-gram diversity aggregates over sequences.
enum class NgramPooling {
  /// Mean over sequences of (unique n-grams / n-grams) within the sequence.
  kPerSequence,
  /// Unique n-grams over the whole batch / all n-grams.
  kPooled,
};

/// Unique n-gram ratio. Sequences shorter than n are skipped.
double ngram_diversity(const SequenceBatch& batch, std::size_t n,
                       NgramPooling pooling = NgramPooling::kPerSequence);

/// 1 - distinct sequences / N.
double duplication_rate(const SequenceBatch& batch);

struct SurfaceMetrics {
  double unigram_l1 = 0.0;
  double diversity_2gram = 0.0;
  double diversity_3gram = 0.0;
  double duplication_rate = 0.0;
};

/// unigram_l1 is ||pi_hat - pi0||_1 with pi_hat from the transition counts.
SurfaceMetrics surface_metrics(const SequenceBatch& batch, const TransitionStats& stats,
                               std::span<const double> pi0,
                               NgramPooling pooling = NgramPooling::kPerSequence);

// ---------------------------------------------------------------------------

struct MetricsReport {
  std::string dataset;
  std::string type;   // "Baseline" or "Diffusion"
  std::string model;  // "AR", "MDLM", ...
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;

  double nll_rate = 0.0;
  double kl_rate = 0.0;
  double tv_rate = 0.0;
  double entropy_rate = 0.0;
  double unigram_l1 = 0.0;
  double diversity_2gram = 0.0;
  double diversity_3gram = 0.0;
  double duplication_rate = 0.0;
  double other_mass = 0.0;
  double support_fraction = 0.0;

  /// |nll - (kl + entropy)|.
  double identity_gap() const;
  /// Throws NumericsError when a documented invariant fails (finite rates,
  /// kl >= 0, tv and other_mass in [0,1], identity within `tol`).
  void check(double tol = 1e-9) const;
};

/// Full metric suite for a batch of samples.
MetricsReport evaluate(const SequenceBatch& batch, const OracleChain& chain,
                       NgramPooling pooling = NgramPooling::kPerSequence);

inline constexpr const char* kCsvHeader =
    "Dataset, Type, Model, Steps, Seed, NLL, KL rate, TV rate, Ent rate, Unigram L1, "
    "2-gram Diversity, 3-gram Diversity, Duplicate, Other mass, Support frac";

/// One CSV line (no newline). Missing steps/seed print as "-"; metrics use
/// `precision` decimals.
std::string to_csv_row(const MetricsReport& report, int precision = 6);
nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace odl
