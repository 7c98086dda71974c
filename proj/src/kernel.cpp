// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include "odl/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "odl/error.hpp"
#include "odl/parallel.hpp"

namespace odl {

// ---------------------------------------------------------------------------
// Bigram counting

std::uint64_t BigramCounts::count(Token i, Token j) const {
  if (i >= rows.size()) return 0;
  const auto it = rows[i].find(j);
  return it == rows[i].end() ? 0 : it->second;
}

std::uint64_t BigramCounts::row_total(Token i) const {
  std::uint64_t total = 0;
  for (const auto& [j, c] : rows[i]) total += c;
  return total;
}

BigramCounter::BigramCounter(std::uint32_t vocab_size) {
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  counts_.vocab_size = vocab_size;
  counts_.rows.resize(vocab_size);
  counts_.unigram.assign(vocab_size, 0);
}

void BigramCounter::add(Token token) {
  const std::uint64_t pos = position_++;
  if (token == kDocumentSeparator) {
    end_document();
    return;
  }
  if (token >= counts_.vocab_size) {
    throw InputError("token id " + std::to_string(token) + " out of range for V=" +
                         std::to_string(counts_.vocab_size),
                     pos);
  }
  ++counts_.unigram[token];
  ++counts_.total_tokens;
  if (previous_) ++counts_.rows[*previous_][token];
  previous_ = token;
}

void BigramCounter::add(std::span<const Token> tokens) {
  for (Token t : tokens) add(t);
}

void BigramCounter::merge(const BigramCounts& other) {
  if (other.vocab_size != counts_.vocab_size)
    throw ConfigError("cannot merge bigram counts with different vocab sizes");
  for (std::uint32_t i = 0; i < other.vocab_size; ++i) {
    for (const auto& [j, c] : other.rows[i]) counts_.rows[i][j] += c;
    counts_.unigram[i] += other.unigram[i];
  }
  counts_.total_tokens += other.total_tokens;
}

BigramCounts count_bigrams(std::span<const Token> stream, std::uint32_t vocab_size) {
  BigramCounter counter(vocab_size);
  counter.add(stream);
  return counter.take();
}

// ---------------------------------------------------------------------------
// Sparsification

std::size_t effective_support(std::span<const double> probs, double mass_threshold) {
  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double acc = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    acc += sorted[k];
    // Guard the comparison against rounding in the running sum.
    if (acc >= mass_threshold - 1e-12) return k + 1;
  }
  return sorted.size();
}

std::size_t nearest_rank(std::vector<std::size_t> values, double q) {
  if (values.empty()) throw ConfigError("nearest_rank: empty input");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("quantile must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

namespace {

// Top-k entries of a (successor, weight) list by weight, ties by id, then
// renormalized and re-sorted by successor id.
SparseRow truncate_row(std::vector<std::pair<Token, double>> entries, std::size_t k) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  entries.resize(std::min(k, entries.size()));
  double total = 0.0;
  for (const auto& e : entries) total += e.second;
  SparseRow row;
  row.reserve(entries.size());
  for (const auto& [j, w] : entries) row.push_back({j, w / total});
  std::sort(row.begin(), row.end(),
            [](const Edge& a, const Edge& b) { return a.successor < b.successor; });
  return row;
}

}  // namespace

SparsifyResult sparsify(const BigramCounts& counts, double mass_threshold,
                        double percentile) {
  if (!(mass_threshold > 0.0 && mass_threshold <= 1.0))
    throw ConfigError("mass_threshold must lie in (0, 1]");
  if (!(percentile > 0.0 && percentile <= 1.0))
    throw ConfigError("percentile must lie in (0, 1]");
  const std::uint32_t V = counts.vocab_size;
  SparsifyResult result;
  result.k_star.assign(V, 0);

  std::vector<std::size_t> observed;
  for (std::uint32_t i = 0; i < V; ++i) {
    const auto& row = counts.rows[i];
    if (row.empty()) continue;
    const double total = static_cast<double>(counts.row_total(i));
    std::vector<double> probs;
    probs.reserve(row.size());
    for (const auto& [j, c] : row) probs.push_back(static_cast<double>(c) / total);
    result.k_star[i] = effective_support(probs, mass_threshold);
    observed.push_back(result.k_star[i]);
  }
  if (observed.empty()) throw InputError("sparsify: no transitions observed");
  result.K = static_cast<std::uint32_t>(nearest_rank(observed, percentile));

  result.rows.resize(V);
  for (std::uint32_t i = 0; i < V; ++i) {
    std::vector<std::pair<Token, double>> entries;
    if (!counts.rows[i].empty()) {
      for (const auto& [j, c] : counts.rows[i])
        entries.emplace_back(j, static_cast<double>(c));
    } else {
      for (std::uint32_t j = 0; j < V; ++j)
        if (counts.unigram[j] > 0)
          entries.emplace_back(j, static_cast<double>(counts.unigram[j]));
      ++result.unigram_fallback_rows;
    }
    result.rows[i] = truncate_row(std::move(entries), result.K);
  }
  return result;
}

std::vector<double> smoothed_unigram(const BigramCounts& counts) {
  const double denom = static_cast<double>(counts.total_tokens) + counts.vocab_size;
  std::vector<double> nu(counts.vocab_size);
  for (std::uint32_t j = 0; j < counts.vocab_size; ++j)
    nu[j] = (static_cast<double>(counts.unigram[j]) + 1.0) / denom;
  return nu;
}

// ---------------------------------------------------------------------------
// TransitionKernel

namespace {

std::vector<double> normalized(std::vector<double> v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= total;
  return v;
}

std::vector<double> cumulative(std::span<const double> v) {
  std::vector<double> cdf(v.size());
  std::partial_sum(v.begin(), v.end(), cdf.begin());
  return cdf;
}

// First index whose cumulative mass exceeds target; clamps to the last
// positive-mass index.
std::size_t search_cdf(std::span<const double> cdf, double target) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  if (it == cdf.end()) {
    // Rounding left target at or above the total; take the last index that
    // carries mass.
    std::size_t k = cdf.size() - 1;
    while (k > 0 && cdf[k] == cdf[k - 1]) --k;
    return k;
  }
  return static_cast<std::size_t>(it - cdf.begin());
}

}  // namespace

TransitionKernel::TransitionKernel(std::vector<SparseRow> rows, double epsilon,
                                   std::vector<double> nu, KernelOptions options) {
  const auto V = static_cast<std::uint32_t>(rows.size());
  if (V == 0) throw ConfigError("kernel needs at least one state");
  if (nu.size() != V) throw ConfigError("nu length differs from the number of rows");
  const bool eps_ok = options.allow_zero_teleport ? (epsilon >= 0.0 && epsilon < 1.0)
                                                  : (epsilon > 0.0 && epsilon < 1.0);
  if (!eps_ok) throw ConfigError("epsilon must lie in (0, 1)");

  bool has_zero = false;
  double nu_total = 0.0;
  for (double x : nu) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("nu entries must be finite and nonnegative");
    has_zero |= (x == 0.0);
    nu_total += x;
  }
  if (!(nu_total > 0.0)) throw ConfigError("nu has zero total mass");
  if (has_zero) {
    if (!options.add_one_smoothing)
      throw ConfigError("nu contains zero entries; enable add-one smoothing");
    // nu is read as relative counts: nu_j <- nu_j + 1.
    for (double& x : nu) x += 1.0;
    nu_total += static_cast<double>(V);
  }
  if (std::abs(nu_total - 1.0) > 1e-12) nu = normalized(std::move(nu));

  vocab_size_ = V;
  epsilon_ = epsilon;
  offsets_.assign(V + 1, 0);
  for (std::uint32_t i = 0; i < V; ++i) {
    auto& row = rows[i];
    if (row.empty()) throw ConfigError("row " + std::to_string(i) + " is empty");
    std::sort(row.begin(), row.end(),
              [](const Edge& a, const Edge& b) { return a.successor < b.successor; });
    double total = 0.0;
    for (std::size_t e = 0; e < row.size(); ++e) {
      const Edge& edge = row[e];
      if (edge.successor >= V)
        throw ConfigError("row " + std::to_string(i) + " has successor out of range");
      if (e > 0 && row[e - 1].successor == edge.successor)
        throw ConfigError("row " + std::to_string(i) + " has a duplicate successor");
      if (!(edge.prob >= 0.0)) throw ConfigError("negative transition probability");
      total += edge.prob;
    }
    if (!(total > 0.0)) throw ConfigError("row " + std::to_string(i) + " has zero mass");
    if (std::abs(total - 1.0) > 1e-12)
      for (Edge& edge : row) edge.prob /= total;
    sparsity_ = std::max<std::uint32_t>(sparsity_, static_cast<std::uint32_t>(row.size()));
    offsets_[i + 1] = offsets_[i] + row.size();
  }
  edges_.reserve(offsets_[V]);
  for (auto& row : rows) edges_.insert(edges_.end(), row.begin(), row.end());

  edge_cdf_.resize(edges_.size());
  for (std::uint32_t i = 0; i < V; ++i) {
    double acc = 0.0;
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      acc += edges_[e].prob;
      edge_cdf_[e] = acc;
    }
  }

  // Transposed (CSC) view for column queries in the backward pass.
  column_offsets_.assign(V + 1, 0);
  for (const Edge& e : edges_) ++column_offsets_[e.successor + 1];
  std::partial_sum(column_offsets_.begin(), column_offsets_.end(), column_offsets_.begin());
  column_edges_.resize(edges_.size());
  std::vector<std::size_t> fill(column_offsets_.begin(), column_offsets_.end() - 1);
  for (std::uint32_t i = 0; i < V; ++i)
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e)
      column_edges_[fill[edges_[e].successor]++] = {i, edges_[e].prob};

  nu_ = std::move(nu);
  log_nu_.resize(V);
  for (std::uint32_t j = 0; j < V; ++j) log_nu_[j] = std::log(nu_[j]);
  nu_cdf_ = cumulative(nu_);
}

double TransitionKernel::sparse_prob(Token i, Token j) const {
  const auto r = row(i);
  const auto it = std::lower_bound(r.begin(), r.end(), j,
                                   [](const Edge& e, Token t) { return e.successor < t; });
  return (it != r.end() && it->successor == j) ? it->prob : 0.0;
}

bool TransitionKernel::in_support(Token i, Token j) const {
  const auto r = row(i);
  const auto it = std::lower_bound(r.begin(), r.end(), j,
                                   [](const Edge& e, Token t) { return e.successor < t; });
  return it != r.end() && it->successor == j;
}

std::vector<double> TransitionKernel::effective_row(Token i) const {
  std::vector<double> out(vocab_size_);
  for (std::uint32_t j = 0; j < vocab_size_; ++j) out[j] = epsilon_ * nu_[j];
  for (const Edge& e : row(i)) out[e.successor] += (1.0 - epsilon_) * e.prob;
  return out;
}

Token TransitionKernel::sample_nu(RngStream& rng) const {
  return static_cast<Token>(search_cdf(nu_cdf_, rng.uniform() * nu_cdf_.back()));
}

Token TransitionKernel::sample_next(Token i, RngStream& rng) const {
  if (epsilon_ > 0.0 && rng.uniform() < epsilon_) return sample_nu(rng);
  const std::span<const double> cdf(edge_cdf_.data() + offsets_[i],
                                    offsets_[i + 1] - offsets_[i]);
  const std::size_t k = search_cdf(cdf, rng.uniform() * cdf.back());
  return edges_[offsets_[i] + k].successor;
}

std::vector<double> TransitionKernel::propagate(std::span<const double> pi) const {
  const double mass = std::accumulate(pi.begin(), pi.end(), 0.0);
  std::vector<double> out(vocab_size_);
  for (std::uint32_t j = 0; j < vocab_size_; ++j) out[j] = epsilon_ * mass * nu_[j];
  for (std::uint32_t i = 0; i < vocab_size_; ++i) {
    const double w = (1.0 - epsilon_) * pi[i];
    if (w == 0.0) continue;
    for (const Edge& e : row(i)) out[e.successor] += w * e.prob;
  }
  return out;
}

TransitionKernel build_kernel(std::vector<SparseRow> rows, double epsilon,
                              std::vector<double> nu, KernelOptions options) {
  return TransitionKernel(std::move(rows), epsilon, std::move(nu), options);
}

// ---------------------------------------------------------------------------
// Stationary distribution

namespace {

double l1_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

}  // namespace

StationaryResult stationary(const TransitionKernel& kernel, double tol,
                            std::size_t max_iters, std::span<const double> init) {
  if (!(tol > 0.0)) throw ConfigError("stationary: tol must be positive");
  const std::uint32_t V = kernel.vocab_size();
  StationaryResult result;
  if (init.empty()) {
    result.pi.assign(V, 1.0 / V);
  } else {
    if (init.size() != V) throw ConfigError("stationary: init has wrong length");
    result.pi = normalized(std::vector<double>(init.begin(), init.end()));
  }
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::vector<double> next = normalized(kernel.propagate(result.pi));
    result.residual = l1_distance(next, result.pi);
    result.pi = std::move(next);
    result.iterations = it + 1;
    if (result.residual < tol) {
      // Residual of the returned vector itself.
      result.residual = l1_distance(kernel.propagate(result.pi), result.pi);
      if (result.residual < tol) return result;
    }
  }
  throw ConvergenceError("stationary: no convergence after " + std::to_string(max_iters) +
                             " iterations, residual " + std::to_string(result.residual),
                         result.residual);
}

StationaryCheck stationary_agreement(const TransitionKernel& kernel, double tol,
                                     std::size_t max_iters, std::uint64_t seed) {
  const std::uint32_t V = kernel.vocab_size();
  std::vector<std::vector<double>> inits;
  inits.emplace_back(V, 1.0);
  inits.emplace_back(kernel.nu().begin(), kernel.nu().end());
  std::vector<double> point(V, 0.0);
  point[V - 1] = 1.0;
  inits.push_back(point);
  RngStream rng(seed, 0, 0, 0);
  std::vector<double> random(V);
  for (double& x : random) x = rng.uniform() + 1e-3;
  inits.push_back(random);

  StationaryCheck check;
  for (const auto& init : inits) check.runs.push_back(stationary(kernel, tol, max_iters, init));
  for (std::size_t a = 0; a < check.runs.size(); ++a)
    for (std::size_t b = a + 1; b < check.runs.size(); ++b)
      check.max_pairwise_l1 =
          std::max(check.max_pairwise_l1, l1_distance(check.runs[a].pi, check.runs[b].pi));
  return check;
}

// ---------------------------------------------------------------------------
// OracleChain

OracleChain::OracleChain(TransitionKernel kernel, std::vector<double> pi0)
    : kernel_(std::move(kernel)), pi0_(std::move(pi0)) {
  if (pi0_.size() != kernel_.vocab_size()) throw ConfigError("pi0 has wrong length");
  index_pi0();
}

OracleChain::OracleChain(TransitionKernel kernel, double tol, std::size_t max_iters)
    : kernel_(std::move(kernel)) {
  pi0_ = stationary(kernel_, tol, max_iters).pi;
  index_pi0();
}

void OracleChain::index_pi0() {
  double total = 0.0;
  for (double x : pi0_) {
    if (!(x >= 0.0)) throw ConfigError("pi0 entries must be nonnegative");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12) pi0_ = normalized(std::move(pi0_));
  log_pi0_.resize(pi0_.size());
  for (std::size_t i = 0; i < pi0_.size(); ++i) log_pi0_[i] = std::log(pi0_[i]);
  pi0_cdf_ = cumulative(pi0_);
}

Token OracleChain::sample_initial(RngStream& rng) const {
  return static_cast<Token>(search_cdf(pi0_cdf_, rng.uniform() * pi0_cdf_.back()));
}

// ---------------------------------------------------------------------------
// Autoregressive sampling

namespace {

void check_shape(std::size_t length, std::size_t count) {
  if (length == 0) throw ConfigError("sequence length must be at least 1");
  if (count == 0) throw ConfigError("sequence count must be at least 1");
}

}  // namespace

SequenceBatch sample_ar(const OracleChain& chain, std::size_t length, std::size_t count,
                        std::uint64_t seed, unsigned workers) {
  check_shape(length, count);
  SequenceBatch batch(count, length);
  parallel_for(count, workers, [&](std::size_t n) {
    auto seq = batch[n];
    const auto sid = static_cast<std::uint32_t>(n);
    RngStream first(seed, sid, 0, 0);
    seq[0] = chain.sample_initial(first);
    for (std::size_t u = 1; u < length; ++u) {
      RngStream rng(seed, sid, static_cast<std::uint32_t>(u), 0);
      seq[u] = chain.kernel().sample_next(seq[u - 1], rng);
    }
  });
  return batch;
}

SequenceBatch sample_ar_sharpened(const OracleChain& chain, double beta, std::size_t length,
                                  std::size_t count, std::uint64_t seed, unsigned workers) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (beta == 1.0) return sample_ar(chain, length, count, seed, workers);
  check_shape(length, count);
  const auto& kernel = chain.kernel();
  const std::uint32_t V = kernel.vocab_size();

  // Tempered rows are computed on first use; each state is owned by one
  // slot so the cache is filled before the parallel section.
  std::vector<std::vector<double>> tempered(V);
  auto tempered_row = [&](Token i) {
    std::vector<double> row = kernel.effective_row(i);
    double max_log = -std::numeric_limits<double>::infinity();
    for (double p : row) max_log = std::max(max_log, std::log(p));
    for (double& p : row) p = std::exp(beta * (std::log(p) - max_log));
    return row;
  };
  const bool precompute = static_cast<std::uint64_t>(V) * V <= (1ull << 24);
  if (precompute)
    parallel_for(V, workers, [&](std::size_t i) { tempered[i] = tempered_row(static_cast<Token>(i)); });

  SequenceBatch batch(count, length);
  parallel_for(count, workers, [&](std::size_t n) {
    auto seq = batch[n];
    const auto sid = static_cast<std::uint32_t>(n);
    RngStream first(seed, sid, 0, 0);
    seq[0] = chain.sample_initial(first);
    for (std::size_t u = 1; u < length; ++u) {
      RngStream rng(seed, sid, static_cast<std::uint32_t>(u), 0);
      if (precompute) {
        seq[u] = static_cast<Token>(draw_categorical(tempered[seq[u - 1]], rng.uniform()));
      } else {
        const auto row = tempered_row(seq[u - 1]);
        seq[u] = static_cast<Token>(draw_categorical(row, rng.uniform()));
      }
    }
  });
  return batch;
}

}  // namespace odl
