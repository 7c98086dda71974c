// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

// Test-side reference computations. Everything here works on plain dense
// matrices built directly from the raw inputs a test hands to the library;
// nothing calls back into the code under test.

#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "odl/kernel.hpp"
#include "odl/types.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

/// Raw ingredients of a teleport kernel.
struct RawChain {
  std::uint32_t V = 0;
  std::vector<odl::SparseRow> rows;
  double eps = 0.0;
  std::vector<double> nu;
};

inline Matrix effective(const RawChain& c) {
  Matrix P(c.V, std::vector<double>(c.V));
  for (std::uint32_t i = 0; i < c.V; ++i) {
    for (std::uint32_t j = 0; j < c.V; ++j) P[i][j] = c.eps * c.nu[j];
    for (const auto& e : c.rows[i]) P[i][e.successor] += (1.0 - c.eps) * e.prob;
  }
  return P;
}

/// Random chain with K successors per row (distinct, id-sorted) and a
/// strictly positive nu. std::mt19937_64 keeps it independent of the
/// library's generator.
inline RawChain random_raw(std::uint32_t V, std::uint32_t K, double eps, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RawChain c;
  c.V = V;
  c.eps = eps;
  c.rows.resize(V);
  for (std::uint32_t i = 0; i < V; ++i) {
    std::vector<odl::Token> ids(V);
    for (std::uint32_t j = 0; j < V; ++j) ids[j] = j;
    std::shuffle(ids.begin(), ids.end(), gen);
    ids.resize(K);
    std::sort(ids.begin(), ids.end());
    double total = 0.0;
    for (auto j : ids) {
      const double w = 0.02 + unif(gen);
      c.rows[i].push_back({j, w});
      total += w;
    }
    for (auto& e : c.rows[i]) e.prob /= total;
  }
  c.nu.resize(V);
  double total = 0.0;
  for (auto& x : c.nu) total += x = 0.1 + unif(gen);
  for (auto& x : c.nu) x /= total;
  return c;
}

inline odl::TransitionKernel to_kernel(const RawChain& c) {
  return odl::TransitionKernel(c.rows, c.eps, c.nu);
}

/// Stationary distribution by dense power iteration in long double.
inline std::vector<double> dense_stationary(const Matrix& P) {
  const std::size_t V = P.size();
  std::vector<long double> pi(V, 1.0L / V), next(V);
  for (int it = 0; it < 200000; ++it) {
    std::fill(next.begin(), next.end(), 0.0L);
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j) next[j] += pi[i] * P[i][j];
    long double diff = 0.0L;
    for (std::size_t j = 0; j < V; ++j) diff += std::fabs(next[j] - pi[j]);
    pi.swap(next);
    if (diff < 1e-15L) break;
  }
  return {pi.begin(), pi.end()};
}

/// p0 of every length-T sequence, indexed by base-V digits (x_0 most
/// significant).
inline std::vector<double> joint(const std::vector<double>& pi0, const Matrix& P, std::size_t T) {
  const std::size_t V = P.size();
  std::size_t n = 1;
  for (std::size_t t = 0; t < T; ++t) n *= V;
  std::vector<double> p(n);
  std::vector<std::size_t> x(T);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t r = k;
    for (std::size_t t = T; t-- > 0;) {
      x[t] = r % V;
      r /= V;
    }
    double w = pi0[x[0]];
    for (std::size_t t = 1; t < T; ++t) w *= P[x[t - 1]][x[t]];
    p[k] = w;
  }
  return p;
}

inline std::size_t index_of(std::span<const odl::Token> x, std::size_t V) {
  std::size_t k = 0;
  for (auto t : x) k = k * V + t;
  return k;
}

/// Posterior marginals (T x V) by summing the joint over completions
/// consistent with the revealed entries (kMask = free).
inline Matrix marginals(const std::vector<double>& p, std::span<const odl::Token> z, std::size_t V) {
  const std::size_t T = z.size();
  Matrix m(T, std::vector<double>(V, 0.0));
  std::vector<std::size_t> x(T);
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::size_t r = k;
    for (std::size_t t = T; t-- > 0;) {
      x[t] = r % V;
      r /= V;
    }
    bool ok = true;
    for (std::size_t t = 0; t < T && ok; ++t) ok = z[t] == odl::kMask || z[t] == x[t];
    if (!ok) continue;
    for (std::size_t t = 0; t < T; ++t) m[t][x[t]] += p[k];
  }
  for (auto& row : m) {
    double s = 0.0;
    for (double v : row) s += v;
    for (double& v : row) v /= s;
  }
  return m;
}

/// Posterior marginals by dense forward-backward with per-step scaling in
/// long double; returns log gamma (-inf where gamma is zero).
inline Matrix dense_log_posterior(const std::vector<double>& pi0, const Matrix& P,
                                  std::span<const odl::Token> z) {
  const std::size_t V = P.size(), T = z.size();
  using LRow = std::vector<long double>;
  auto evidence = [&](std::size_t t, std::size_t v) {
    return z[t] == odl::kMask || z[t] == v ? 1.0L : 0.0L;
  };
  auto normalize = [](LRow& r) {
    long double s = 0.0L;
    for (auto x : r) s += x;
    for (auto& x : r) x /= s;
  };
  std::vector<LRow> a(T, LRow(V, 0.0L)), b(T, LRow(V, 1.0L));
  for (std::size_t v = 0; v < V; ++v) a[0][v] = pi0[v] * evidence(0, v);
  normalize(a[0]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < V; ++j) {
      long double s = 0.0L;
      for (std::size_t i = 0; i < V; ++i) s += a[t - 1][i] * P[i][j];
      a[t][j] = s * evidence(t, j);
    }
    normalize(a[t]);
  }
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < V; ++i) {
      long double s = 0.0L;
      for (std::size_t j = 0; j < V; ++j) s += P[i][j] * evidence(t + 1, j) * b[t + 1][j];
      b[t][i] = s;
    }
    normalize(b[t]);
  }
  Matrix out(T, std::vector<double>(V));
  for (std::size_t t = 0; t < T; ++t) {
    LRow g(V);
    for (std::size_t v = 0; v < V; ++v) g[v] = a[t][v] * b[t][v];
    normalize(g);
    for (std::size_t v = 0; v < V; ++v)
      out[t][v] = g[v] > 0.0L ? static_cast<double>(std::log(g[v])) : -INFINITY;
  }
  return out;
}

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double critical = 0.0;
  double p_value = 0.0;
  bool accept = false;
};

/// Pearson goodness of fit of observed counts against probabilities, with
/// cells of expected count < 5 pooled into one.
inline ChiSquare chi_square(const std::vector<std::uint64_t>& observed,
                            const std::vector<double>& probs, double alpha) {
  double n = 0.0;
  for (auto c : observed) n += static_cast<double>(c);
  ChiSquare out;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  std::size_t cells = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double e = n * probs[k];
    if (e < 5.0) {
      pooled_obs += static_cast<double>(observed[k]);
      pooled_exp += e;
      continue;
    }
    const double d = static_cast<double>(observed[k]) - e;
    out.statistic += d * d / e;
    ++cells;
  }
  if (pooled_exp > 0.0) {
    const double d = pooled_obs - pooled_exp;
    out.statistic += d * d / pooled_exp;
    ++cells;
  }
  out.dof = cells - 1;
  const boost::math::chi_squared dist(static_cast<double>(out.dof));
  out.critical = boost::math::quantile(boost::math::complement(dist, alpha));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  out.accept = out.statistic <= out.critical;
  return out;
}

}  // namespace oracle
