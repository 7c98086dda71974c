// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include "odl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "odl/error.hpp"

namespace odl {

TransitionStats::TransitionStats(std::uint32_t vocab_size)
    : vocab_size_(vocab_size), rows_(vocab_size), row_totals_(vocab_size, 0) {}

void TransitionStats::accumulate(std::span<const Token> sequence) {
  for (std::size_t u = 0; u < sequence.size(); ++u) {
    if (sequence[u] == kMask) throw InputError("residual mask token in sample", u);
    if (sequence[u] >= vocab_size_)
      throw InputError("token id " + std::to_string(sequence[u]) + " out of range", u);
  }
  for (std::size_t u = 1; u < sequence.size(); ++u) {
    ++rows_[sequence[u - 1]][sequence[u]];
    ++row_totals_[sequence[u - 1]];
  }
  if (sequence.size() > 1) total_ += sequence.size() - 1;
  ++sequences_;
}

void TransitionStats::accumulate(const SequenceBatch& batch) {
  for (std::size_t n = 0; n < batch.size(); ++n) {
    try {
      accumulate(batch[n]);
    } catch (const InputError& e) {
      throw InputError("sequence " + std::to_string(n) + ": " + e.what(),
                       n * batch.length() + e.position());
    }
  }
}

void TransitionStats::merge(const TransitionStats& other) {
  if (other.vocab_size_ != vocab_size_) throw ConfigError("merging stats over different vocabularies");
  for (std::uint32_t i = 0; i < vocab_size_; ++i) {
    for (const auto& [j, c] : other.rows_[i]) rows_[i][j] += c;
    row_totals_[i] += other.row_totals_[i];
  }
  total_ += other.total_;
  sequences_ += other.sequences_;
}

std::uint64_t TransitionStats::count(Token i, Token j) const {
  const auto it = rows_[i].find(j);
  return it == rows_[i].end() ? 0 : it->second;
}

std::size_t TransitionStats::distinct() const {
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.size();
  return n;
}

std::vector<double> TransitionStats::pi_hat() const {
  std::vector<double> pi(vocab_size_, 0.0);
  if (total_ == 0) return pi;
  for (std::uint32_t i = 0; i < vocab_size_; ++i)
    pi[i] = static_cast<double>(row_totals_[i]) / static_cast<double>(total_);
  return pi;
}

std::vector<std::pair<Token, std::uint64_t>> TransitionStats::row(Token i) const {
  std::vector<std::pair<Token, std::uint64_t>> out(rows_[i].begin(), rows_[i].end());
  std::sort(out.begin(), out.end());
  return out;
}

TransitionStats accumulate(const SequenceBatch& batch, std::uint32_t vocab_size) {
  TransitionStats stats(vocab_size);
  stats.accumulate(batch);
  return stats;
}

// ---------------------------------------------------------------------------

namespace {

void require_compatible(const TransitionStats& stats, const TransitionKernel& kernel) {
  if (stats.vocab_size() != kernel.vocab_size())
    throw ConfigError("stats and kernel vocabularies differ");
  if (stats.total() == 0) throw InputError("no transitions to evaluate");
}

}  // namespace

TransitionRates transition_rates(const TransitionStats& stats, const TransitionKernel& kernel) {
  require_compatible(stats, kernel);
  const double N = static_cast<double>(stats.total());
  const double eps = kernel.epsilon();
  const auto nu = kernel.nu();
  TransitionRates r;
  for (std::uint32_t i = 0; i < stats.vocab_size(); ++i) {
    const std::uint64_t rt = stats.row_total(i);
    if (rt == 0) continue;
    const double pi = static_cast<double>(rt) / N;
    const auto seen = stats.row(i);
    const auto sparse = kernel.row(i);
    double nll = 0.0, kl = 0.0, h = 0.0, abs_sum = 0.0, nu_sum = 0.0;
    // Merge observed successors with the sparse support, both ascending.
    std::size_t a = 0, b = 0;
    while (a < seen.size() || b < sparse.size()) {
      Token j;
      double p_hat = 0.0, sp = 0.0;
      if (b == sparse.size() || (a < seen.size() && seen[a].first < sparse[b].successor)) {
        j = seen[a].first;
        p_hat = static_cast<double>(seen[a++].second) / static_cast<double>(rt);
      } else if (a == seen.size() || sparse[b].successor < seen[a].first) {
        j = sparse[b].successor;
        sp = sparse[b++].prob;
      } else {
        j = seen[a].first;
        p_hat = static_cast<double>(seen[a++].second) / static_cast<double>(rt);
        sp = sparse[b++].prob;
      }
      const double q = (1.0 - eps) * sp + eps * nu[j];
      nu_sum += nu[j];
      abs_sum += std::abs(p_hat - q);
      if (p_hat > 0.0) {
        const double log_p = std::log(p_hat);
        const double log_q = std::log(q);
        nll -= p_hat * log_q;
        h -= p_hat * log_p;
        kl += p_hat * (log_p - log_q);
      }
    }
    const double tail = eps * std::max(0.0, 1.0 - nu_sum);
    r.nll += pi * nll;
    r.kl += pi * kl;
    r.entropy += pi * h;
    r.tv += pi * 0.5 * (abs_sum + tail);
  }
  return r;
}

double nll_rate(const TransitionStats& stats, const TransitionKernel& kernel) {
  return transition_rates(stats, kernel).nll;
}

double kl_rate(const TransitionStats& stats, const TransitionKernel& kernel) {
  return transition_rates(stats, kernel).kl;
}

double tv_rate(const TransitionStats& stats, const TransitionKernel& kernel) {
  return transition_rates(stats, kernel).tv;
}

double entropy_rate(const TransitionStats& stats) {
  if (stats.total() == 0) throw InputError("no transitions to evaluate");
  const double N = static_cast<double>(stats.total());
  double total = 0.0;
  for (std::uint32_t i = 0; i < stats.vocab_size(); ++i) {
    const std::uint64_t rt = stats.row_total(i);
    if (rt == 0) continue;
    double h = 0.0;
    for (const auto& [j, c] : stats.row(i)) {
      const double p = static_cast<double>(c) / static_cast<double>(rt);
      h -= p * std::log(p);
    }
    total += static_cast<double>(rt) / N * h;
  }
  return total;
}

CoverageMetrics coverage_metrics(const TransitionStats& stats, const TransitionKernel& kernel) {
  require_compatible(stats, kernel);
  const double N = static_cast<double>(stats.total());
  CoverageMetrics out;
  std::uint64_t outside = 0;
  for (std::uint32_t i = 0; i < stats.vocab_size(); ++i)
    for (const auto& [j, c] : stats.row(i))
      if (!kernel.in_support(i, j)) outside += c;
  // sum_i pi_hat(i) * (outside_i / rt_i) telescopes to outside / N.
  out.other_mass = static_cast<double>(outside) / N;
  out.support_fraction = static_cast<double>(stats.distinct()) / N;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Packs an n-gram into one integer; valid while V^n < 2^64.
std::uint64_t pack(std::span<const Token> gram, std::uint64_t V) {
  std::uint64_t key = 0;
  for (Token t : gram) key = key * V + t;
  return key;
}

std::uint64_t vocab_bound(const SequenceBatch& batch) {
  Token hi = 0;
  for (Token t : batch.tokens()) hi = std::max(hi, t);
  return static_cast<std::uint64_t>(hi) + 1;
}

}  // namespace

double ngram_diversity(const SequenceBatch& batch, std::size_t n, NgramPooling pooling) {
  if (n == 0) throw ConfigError("n-gram order must be positive");
  const std::uint64_t V = vocab_bound(batch);
  if (std::pow(static_cast<double>(V), static_cast<double>(n)) >= 1.8e19)
    throw ConfigError("n-gram order too large for the vocabulary");
  const std::size_t L = batch.length();
  if (L < n || batch.size() == 0) return 0.0;
  std::vector<std::uint64_t> keys;
  if (pooling == NgramPooling::kPooled) {
    keys.reserve(batch.size() * (L - n + 1));
    for (std::size_t s = 0; s < batch.size(); ++s)
      for (std::size_t u = 0; u + n <= L; ++u) keys.push_back(pack(batch[s].subspan(u, n), V));
    const double total = static_cast<double>(keys.size());
    std::sort(keys.begin(), keys.end());
    return static_cast<double>(std::unique(keys.begin(), keys.end()) - keys.begin()) / total;
  }
  double sum = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    keys.clear();
    for (std::size_t u = 0; u + n <= L; ++u) keys.push_back(pack(batch[s].subspan(u, n), V));
    const double total = static_cast<double>(keys.size());
    std::sort(keys.begin(), keys.end());
    sum += static_cast<double>(std::unique(keys.begin(), keys.end()) - keys.begin()) / total;
  }
  return sum / static_cast<double>(batch.size());
}

double duplication_rate(const SequenceBatch& batch) {
  const std::size_t N = batch.size();
  if (N == 0) return 0.0;
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(batch[a].begin(), batch[a].end(), batch[b].begin(),
                                        batch[b].end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = 1;
  for (std::size_t k = 1; k < N; ++k)
    if (less(order[k - 1], order[k])) ++distinct;
  return 1.0 - static_cast<double>(distinct) / static_cast<double>(N);
}

SurfaceMetrics surface_metrics(const SequenceBatch& batch, const TransitionStats& stats,
                               std::span<const double> pi0, NgramPooling pooling) {
  if (pi0.size() != stats.vocab_size()) throw ConfigError("pi0 length differs from the vocabulary");
  SurfaceMetrics out;
  const auto pi = stats.pi_hat();
  for (std::size_t i = 0; i < pi.size(); ++i) out.unigram_l1 += std::abs(pi[i] - pi0[i]);
  out.diversity_2gram = ngram_diversity(batch, 2, pooling);
  out.diversity_3gram = ngram_diversity(batch, 3, pooling);
  out.duplication_rate = duplication_rate(batch);
  return out;
}

// ---------------------------------------------------------------------------

double MetricsReport::identity_gap() const {
  return std::abs(nll_rate - (kl_rate + entropy_rate));
}

void MetricsReport::check(double tol) const {
  const double all[] = {nll_rate,        kl_rate,          tv_rate,          entropy_rate,
                        unigram_l1,      diversity_2gram,  diversity_3gram,  duplication_rate,
                        other_mass,      support_fraction};
  for (double x : all)
    if (!std::isfinite(x)) throw NumericsError("non-finite metric in report for " + model);
  // Rounding can leave a KL of a perfect match at -1e-17.
  if (kl_rate < -1e-12) throw NumericsError("negative KL rate");
  if (entropy_rate < -1e-12) throw NumericsError("negative entropy rate");
  if (tv_rate < -1e-12 || tv_rate > 1.0 + 1e-12) throw NumericsError("TV rate outside [0,1]");
  if (other_mass < 0.0 || other_mass > 1.0) throw NumericsError("other mass outside [0,1]");
  if (identity_gap() > tol)
    throw NumericsError("nll != kl + entropy (gap " + std::to_string(identity_gap()) + ")");
}

MetricsReport evaluate(const SequenceBatch& batch, const OracleChain& chain,
                       NgramPooling pooling) {
  const auto stats = accumulate(batch, chain.vocab_size());
  const auto rates = transition_rates(stats, chain.kernel());
  const auto coverage = coverage_metrics(stats, chain.kernel());
  const auto surface = surface_metrics(batch, stats, chain.pi0(), pooling);
  MetricsReport r;
  r.nll_rate = rates.nll;
  r.kl_rate = rates.kl;
  r.tv_rate = rates.tv;
  r.entropy_rate = rates.entropy;
  r.unigram_l1 = surface.unigram_l1;
  r.diversity_2gram = surface.diversity_2gram;
  r.diversity_3gram = surface.diversity_3gram;
  r.duplication_rate = surface.duplication_rate;
  r.other_mass = coverage.other_mass;
  r.support_fraction = coverage.support_fraction;
  return r;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string to_csv_row(const MetricsReport& r, int precision) {
  std::string line = csv_field(r.dataset) + ", " + csv_field(r.type) + ", " + csv_field(r.model) +
                     ", " + (r.steps ? std::to_string(*r.steps) : "-") + ", " +
                     (r.seed ? std::to_string(*r.seed) : "-");
  char buf[64];
  for (double x : {r.nll_rate, r.kl_rate, r.tv_rate, r.entropy_rate, r.unigram_l1,
                   r.diversity_2gram, r.diversity_3gram, r.duplication_rate, r.other_mass,
                   r.support_fraction}) {
    std::snprintf(buf, sizeof buf, ", %.*f", precision, x);
    line += buf;
  }
  return line;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {
      {"dataset", r.dataset},
      {"type", r.type},
      {"model", r.model},
      {"steps", r.steps ? nlohmann::json(*r.steps) : nlohmann::json(nullptr)},
      {"seed", r.seed ? nlohmann::json(*r.seed) : nlohmann::json(nullptr)},
      {"nll_rate", r.nll_rate},
      {"kl_rate", r.kl_rate},
      {"tv_rate", r.tv_rate},
      {"entropy_rate", r.entropy_rate},
      {"unigram_l1", r.unigram_l1},
      {"diversity_2gram", r.diversity_2gram},
      {"diversity_3gram", r.diversity_3gram},
      {"duplication_rate", r.duplication_rate},
      {"other_mass", r.other_mass},
      {"support_fraction", r.support_fraction},
  };
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.dataset = j.value("dataset", "");
  r.type = j.value("type", "");
  r.model = j.value("model", "");
  if (j.contains("steps") && !j["steps"].is_null()) r.steps = j["steps"].get<std::size_t>();
  if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::uint64_t>();
  r.nll_rate = j.at("nll_rate").get<double>();
  r.kl_rate = j.at("kl_rate").get<double>();
  r.tv_rate = j.at("tv_rate").get<double>();
  r.entropy_rate = j.at("entropy_rate").get<double>();
  r.unigram_l1 = j.at("unigram_l1").get<double>();
  r.diversity_2gram = j.at("diversity_2gram").get<double>();
  r.diversity_3gram = j.at("diversity_3gram").get<double>();
  r.duplication_rate = j.at("duplication_rate").get<double>();
  r.other_mass = j.at("other_mass").get<double>();
  r.support_fraction = j.at("support_fraction").get<double>();
  return r;
}

}  // namespace odl
