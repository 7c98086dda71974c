// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

// Independent slow paths used to check the sparse smoother. Neither shares
// code with the rank-1 message passing in posterior.cpp.

#include <cmath>
#include <limits>
#include <string>

#include "odl/error.hpp"
#include "odl/posterior.hpp"

namespace odl {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

PosteriorMarginals from_linear(const std::vector<std::vector<double>>& marg) {
  const std::size_t T = marg.size();
  const std::size_t V = T == 0 ? 0 : marg[0].size();
  LogMatrix lg(T, V);
  for (std::size_t t = 0; t < T; ++t) {
    double total = 0.0;
    for (double x : marg[t]) total += x;
    if (!(total > 0.0)) throw NumericsError("reference posterior: zero mass");
    for (std::size_t v = 0; v < V; ++v)
      lg[t][v] = marg[t][v] > 0.0 ? std::log(marg[t][v] / total) : kNegInf;
  }
  return PosteriorMarginals(std::move(lg));
}

}  // namespace

PosteriorMarginals brute_force_posterior(const OracleChain& chain, const MaskedSequence& z) {
  const std::size_t T = z.size();
  const std::uint32_t V = chain.vocab_size();
  std::vector<std::size_t> masked;
  for (std::size_t t = 0; t < T; ++t)
    if (z.is_masked(t)) masked.push_back(t);
  const double completions = std::pow(static_cast<double>(V), static_cast<double>(masked.size()));
  if (completions > kMaxEnumeration)
    throw ConfigError("brute_force_posterior: " + std::to_string(completions) +
                      " completions exceeds the enumeration limit");

  // Dense P' so the enumeration does not depend on the sparse row layout.
  std::vector<std::vector<double>> P(V);
  for (std::uint32_t i = 0; i < V; ++i) P[i] = chain.kernel().effective_row(i);

  std::vector<Token> x(z.tokens().begin(), z.tokens().end());
  for (std::size_t t : masked) x[t] = 0;
  std::vector<std::vector<double>> marg(T, std::vector<double>(V, 0.0));
  for (;;) {
    double w = T ? chain.pi0()[x[0]] : 1.0;
    for (std::size_t t = 1; t < T && w > 0.0; ++t) w *= P[x[t - 1]][x[t]];
    if (w > 0.0)
      for (std::size_t t = 0; t < T; ++t) marg[t][x[t]] += w;
    // Odometer over masked positions.
    std::size_t k = 0;
    for (; k < masked.size(); ++k) {
      if (++x[masked[k]] < V) break;
      x[masked[k]] = 0;
    }
    if (k == masked.size()) break;
  }
  return from_linear(marg);
}

PosteriorMarginals dense_smooth(const OracleChain& chain, const MaskedSequence& z) {
  const std::size_t T = z.size();
  const std::uint32_t V = chain.vocab_size();
  std::vector<std::vector<double>> P(V);
  for (std::uint32_t i = 0; i < V; ++i) P[i] = chain.kernel().effective_row(i);
  auto phi = [&](std::size_t t, std::uint32_t v) {
    return (z.is_masked(t) || z[t] == v) ? 1.0 : 0.0;
  };

  // Rabiner-scaled recursions in the linear domain.
  std::vector<std::vector<double>> alpha(T, std::vector<double>(V, 0.0));
  std::vector<std::vector<double>> beta(T, std::vector<double>(V, 1.0));
  for (std::size_t t = 0; t < T; ++t) {
    double c = 0.0;
    for (std::uint32_t j = 0; j < V; ++j) {
      double s = 0.0;
      if (t == 0) {
        s = chain.pi0()[j];
      } else {
        for (std::uint32_t i = 0; i < V; ++i) s += alpha[t - 1][i] * P[i][j];
      }
      alpha[t][j] = s * phi(t, j);
      c += alpha[t][j];
    }
    if (!(c > 0.0)) throw NumericsError("dense_smooth: zero forward mass");
    for (double& a : alpha[t]) a /= c;
  }
  for (std::size_t t = T; t-- > 1;) {
    double c = 0.0;
    for (std::uint32_t i = 0; i < V; ++i) {
      double s = 0.0;
      for (std::uint32_t j = 0; j < V; ++j) s += P[i][j] * phi(t, j) * beta[t][j];
      beta[t - 1][i] = s;
      c += s;
    }
    if (!(c > 0.0)) throw NumericsError("dense_smooth: zero backward mass");
    for (double& b : beta[t - 1]) b /= c;
  }
  std::vector<std::vector<double>> marg(T, std::vector<double>(V));
  for (std::size_t t = 0; t < T; ++t)
    for (std::uint32_t v = 0; v < V; ++v) marg[t][v] = alpha[t][v] * beta[t][v];
  return from_linear(marg);
}

}  // namespace odl
