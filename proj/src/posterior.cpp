// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include "odl/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

#include "odl/error.hpp"

namespace odl {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double max_of(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  return m;
}

// log sum exp with max subtraction.
double log_sum_exp(std::span<const double> v) {
  const double m = max_of(v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void set_delta(std::span<double> row, Token v) {
  std::fill(row.begin(), row.end(), kNegInf);
  row[v] = 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// MaskedSequence

MaskedSequence::MaskedSequence(std::vector<Token> tokens, std::uint32_t vocab_size)
    : tokens_(std::move(tokens)), vocab_size_(vocab_size) {
  for (std::size_t u = 0; u < tokens_.size(); ++u)
    if (tokens_[u] != kMask && tokens_[u] >= vocab_size_)
      throw InputError("token id " + std::to_string(tokens_[u]) + " out of range", u);
}

MaskedSequence MaskedSequence::fully_masked(std::size_t length, std::uint32_t vocab_size) {
  return MaskedSequence(std::vector<Token>(length, kMask), vocab_size);
}

std::size_t MaskedSequence::mask_count() const {
  return static_cast<std::size_t>(std::count(tokens_.begin(), tokens_.end(), kMask));
}

std::vector<std::size_t> MaskedSequence::revealed_set() const {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < tokens_.size(); ++u)
    if (tokens_[u] != kMask) out.push_back(u);
  return out;
}

void MaskedSequence::reveal(std::size_t u, Token v) {
  if (v >= vocab_size_) throw InputError("reveal: token out of range", u);
  tokens_[u] = v;
}

double MessageLattice::log_evidence() const {
  double total = 0.0;
  for (double x : log_z) total += x;
  return total;
}

std::vector<double> PosteriorMarginals::row(std::size_t u) const {
  const auto lr = log_gamma_[u];
  std::vector<double> out(lr.size());
  for (std::size_t v = 0; v < lr.size(); ++v) out[v] = std::exp(lr[v]);
  return out;
}

double PosteriorMarginals::prob(std::size_t u, Token v) const {
  return std::exp(log_gamma_(u, v));
}

// ---------------------------------------------------------------------------
// Sparse rank-1 forward-backward

void Smoother::forward(const MaskedSequence& z) {
  const auto& kernel = chain_->kernel();
  const std::size_t T = z.size();
  const std::uint32_t V = kernel.vocab_size();
  const double eps = kernel.epsilon();
  const auto nu = kernel.nu();
  auto& alpha = lattice_.log_alpha;
  alpha.resize(T, V);
  lattice_.log_z.assign(T, 0.0);
  weights_.resize(V);
  accum_.resize(V);
  if (T == 0) return;

  // Initial row: pi0 with evidence.
  if (!z.is_masked(0)) {
    const Token a = z[0];
    if (!(chain_->pi0()[a] > 0.0)) throw NumericsError("forward: evidence at position 0 has zero mass");
    set_delta(alpha[0], a);
    lattice_.log_z[0] = chain_->log_pi0()[a];
  } else {
    const auto lp = chain_->log_pi0();
    const double lz = log_sum_exp(lp);
    for (std::uint32_t v = 0; v < V; ++v) alpha[0][v] = lp[v] - lz;
    lattice_.log_z[0] = lz;
  }

  for (std::size_t t = 1; t < T; ++t) {
    const auto prev = alpha[t - 1];
    // Shifted weights w(i) = exp(l_alpha(i) - m); the previous row is
    // normalized so exp(m) >= 1/V.
    const double m = z.is_masked(t - 1) ? max_of(prev) : 0.0;
    if (m == kNegInf) throw NumericsError("forward: all -inf row at position " + std::to_string(t - 1));
    const double scale = (1.0 - eps) * std::exp(m);

    if (!z.is_masked(t)) {
      // Evidence selects one column; only pred(z_t) is needed.
      const Token b = z[t];
      double s = 0.0;
      if (!z.is_masked(t - 1)) {
        s = kernel.sparse_prob(z[t - 1], b);
      } else {
        for (const Edge& e : kernel.column(b)) s += std::exp(prev[e.successor] - m) * e.prob;
      }
      const double pred = scale * s + eps * nu[b];
      if (!(pred > 0.0))
        throw NumericsError("forward: evidence at position " + std::to_string(t) + " has zero probability");
      set_delta(alpha[t], b);
      lattice_.log_z[t] = std::log(pred);
      continue;
    }

    std::fill(accum_.begin(), accum_.end(), 0.0);
    if (!z.is_masked(t - 1)) {
      for (const Edge& e : kernel.row(z[t - 1])) accum_[e.successor] += e.prob;
    } else {
      // Sparse scatter over top-K edges, ascending predecessor then successor.
      for (std::uint32_t i = 0; i < V; ++i) {
        const double w = std::exp(prev[i] - m);
        if (w == 0.0) continue;
        for (const Edge& e : kernel.row(i)) accum_[e.successor] += w * e.prob;
      }
    }
    double total = 0.0;
    for (std::uint32_t j = 0; j < V; ++j) {
      accum_[j] = scale * accum_[j] + eps * nu[j];
      total += accum_[j];
    }
    if (!(total > 0.0)) throw NumericsError("forward: zero mass at position " + std::to_string(t));
    const double log_total = std::log(total);
    auto row = alpha[t];
    for (std::uint32_t j = 0; j < V; ++j) row[j] = std::log(accum_[j]) - log_total;
    lattice_.log_z[t] = log_total;
  }
}

void Smoother::backward(const MaskedSequence& z) {
  const auto& kernel = chain_->kernel();
  const std::size_t T = z.size();
  const std::uint32_t V = kernel.vocab_size();
  const double eps = kernel.epsilon();
  const auto nu = kernel.nu();
  auto& beta = lattice_.log_beta;
  beta.resize(T, V);
  lattice_.log_beta_shift.assign(T, 0.0);
  weights_.resize(V);
  accum_.resize(V);
  if (T == 0) return;

  std::fill(beta[T - 1].begin(), beta[T - 1].end(), 0.0);
  for (std::size_t t = T - 1; t-- > 0;) {
    const auto next = beta[t + 1];
    if (!z.is_masked(t + 1)) {
      // beta_t(i) = P'(b|i) beta_{t+1}(b): one column of P'.
      const Token b = z[t + 1];
      std::fill(accum_.begin(), accum_.end(), eps * nu[b]);
      for (const Edge& e : kernel.column(b)) accum_[e.successor] += (1.0 - eps) * e.prob;
    } else {
      const double m = max_of(next);
      if (m == kNegInf) throw NumericsError("backward: all -inf row at position " + std::to_string(t + 1));
      double c = 0.0;  // teleport scalar, shared by every predecessor
      for (std::uint32_t j = 0; j < V; ++j) {
        weights_[j] = std::exp(next[j] - m);
        c += nu[j] * weights_[j];
      }
      for (std::uint32_t i = 0; i < V; ++i) {
        double a = 0.0;
        for (const Edge& e : kernel.row(i)) a += e.prob * weights_[e.successor];
        accum_[i] = (1.0 - eps) * a + eps * c;
      }
    }
    double shift = kNegInf;
    auto row = beta[t];
    for (std::uint32_t i = 0; i < V; ++i) {
      row[i] = std::log(accum_[i]);
      shift = std::max(shift, row[i]);
    }
    if (shift == kNegInf) throw NumericsError("backward: zero mass at position " + std::to_string(t));
    for (std::uint32_t i = 0; i < V; ++i) row[i] -= shift;
    lattice_.log_beta_shift[t] = shift;
  }
}

void Smoother::smooth(const MaskedSequence& z, PosteriorMarginals& out) {
  if (z.vocab_size() != chain_->vocab_size())
    throw ConfigError("masked sequence vocabulary differs from the chain");
  forward(z);
  backward(z);
  const std::size_t T = z.size();
  const std::uint32_t V = chain_->vocab_size();
  auto& gamma = out.log_gamma();
  gamma.resize(T, V);
  for (std::size_t t = 0; t < T; ++t) {
    auto g = gamma[t];
    if (!z.is_masked(t)) {
      set_delta(g, z[t]);
      continue;
    }
    const auto a = lattice_.log_alpha[t];
    const auto b = lattice_.log_beta[t];
    for (std::uint32_t v = 0; v < V; ++v) g[v] = a[v] + b[v];
    const double lz = log_sum_exp(g);
    if (lz == kNegInf || !std::isfinite(lz))
      throw NumericsError("smooth: degenerate marginal at position " + std::to_string(t));
    for (std::uint32_t v = 0; v < V; ++v) g[v] -= lz;
  }
}

MessageLattice forward_pass(const OracleChain& chain, const MaskedSequence& z) {
  Smoother s(chain);
  s.forward(z);
  return std::move(s.lattice_);
}

MessageLattice backward_pass(const OracleChain& chain, const MaskedSequence& z) {
  Smoother s(chain);
  s.backward(z);
  return std::move(s.lattice_);
}

PosteriorMarginals smooth(const OracleChain& chain, const MaskedSequence& z) {
  Smoother s(chain);
  PosteriorMarginals out;
  s.smooth(z, out);
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

double max_log_deviation(const PosteriorMarginals& a, const PosteriorMarginals& b) {
  if (a.length() != b.length() || a.vocab_size() != b.vocab_size())
    return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  const auto& da = a.log_gamma().data();
  const auto& db = b.log_gamma().data();
  for (std::size_t k = 0; k < da.size(); ++k) {
    if (da[k] == kNegInf && db[k] == kNegInf) continue;
    if (std::isnan(da[k]) || std::isnan(db[k])) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(da[k] - db[k]));
  }
  return worst;
}

double max_prob_deviation(const PosteriorMarginals& a, const PosteriorMarginals& b) {
  if (a.length() != b.length() || a.vocab_size() != b.vocab_size())
    return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  const auto& da = a.log_gamma().data();
  const auto& db = b.log_gamma().data();
  for (std::size_t k = 0; k < da.size(); ++k) {
    const double d = std::abs(std::exp(da[k]) - std::exp(db[k]));
    if (std::isnan(d)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, d);
  }
  return worst;
}

namespace {

void dump_matrix(std::ostream& out, const char* name, const LogMatrix& m) {
  out << "# " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m[r];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      if (row[c] == kNegInf) out << "-inf";
      else out << row[c];
    }
    out << '\n';
  }
}

}  // namespace

void dump_lattice(std::ostream& out, const MessageLattice& lattice,
                  const PosteriorMarginals& gamma) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(17);
  dump_matrix(out, "log_alpha", lattice.log_alpha);
  dump_matrix(out, "log_beta", lattice.log_beta);
  dump_matrix(out, "log_gamma", gamma.log_gamma());
  out.flags(flags);
  out.precision(precision);
}

}  // namespace odl
