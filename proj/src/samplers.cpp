// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include "odl/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "odl/error.hpp"
#include "odl/parallel.hpp"
#include "odl/rng.hpp"

namespace odl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_weight(double w, const char* what, std::size_t t) {
  if (!(w >= 0.0 && w <= 1.0))
    throw NumericsError(std::string(what) + " = " + std::to_string(w) +
                        " outside [0,1] at step " + std::to_string(t));
}

MaskedSequence initial_state(const SamplerConfig& config, std::size_t length, std::uint32_t V) {
  if (config.prompt.size() > length)
    throw ConfigError("prompt of length " + std::to_string(config.prompt.size()) +
                      " exceeds sequence length " + std::to_string(length));
  auto z = MaskedSequence::fully_masked(length, V);
  for (std::size_t u = 0; u < config.prompt.size(); ++u) z.reveal(u, config.prompt[u]);
  return z;
}

}  // namespace

std::string_view family_name(SamplerFamily family) {
  switch (family) {
    case SamplerFamily::kSedd: return "SEDD";
    case SamplerFamily::kMdlm: return "MDLM";
    case SamplerFamily::kLlada: return "LLaDA";
    case SamplerFamily::kRemdmConf: return "ReMDM-conf";
    case SamplerFamily::kRemdmLoop: return "ReMDM-loop";
  }
  return "?";
}

SamplerFamily parse_family(std::string_view name) {
  for (auto f : {SamplerFamily::kSedd, SamplerFamily::kMdlm, SamplerFamily::kLlada,
                 SamplerFamily::kRemdmConf, SamplerFamily::kRemdmLoop}) {
    const auto canon = family_name(f);
    if (canon.size() == name.size() &&
        std::equal(canon.begin(), canon.end(), name.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) ==
                 std::tolower(static_cast<unsigned char>(b));
        }))
      return f;
  }
  throw ConfigError("unknown sampler family '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

NoiseSchedule::NoiseSchedule(std::size_t steps) : steps_(steps) {
  if (steps == 0) throw ConfigError("schedule needs at least one step");
}

double NoiseSchedule::alpha(std::size_t t) const {
  if (t > steps_) throw ConfigError("schedule index out of range");
  if (t == 0) return 1.0;
  if (t == steps_) return 0.0;
  return 1.0 - static_cast<double>(t) / static_cast<double>(steps_);
}

double NoiseSchedule::sigma(std::size_t t) const {
  const double a = alpha(t);
  return a > 0.0 ? -std::log(a) : kInf;
}

double NoiseSchedule::unmask_probability(std::size_t t) const {
  if (t == 0) throw ConfigError("no reverse step out of t = 0");
  const double now = alpha(t);
  const double next = alpha(t - 1);
  return (next - now) / (1.0 - now);
}

void SamplerConfig::validate() const {
  if (steps == 0) throw ConfigError("steps must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive and finite");
  if (!(t_off >= 0.0 && t_off < t_on && t_on <= 1.0))
    throw ConfigError("need 0 <= t_off < t_on <= 1");
  if (!(eta_cap >= 0.0 && eta_cap <= 1.0)) throw ConfigError("eta_cap must lie in [0,1]");
  if (!(nucleus_p > 0.0 && nucleus_p <= 1.0)) throw ConfigError("nucleus_p must lie in (0,1]");
  if (sequential && family != SamplerFamily::kMdlm)
    throw ConfigError("the sequential variant is defined for MDLM only");
}

// ---------------------------------------------------------------------------

std::vector<double> tempered_scores(std::span<const double> row, double beta) {
  if (beta == 1.0) return {row.begin(), row.end()};
  // Log domain so large beta does not underflow every entry.
  double m = -kInf;
  for (double x : row)
    if (x > 0.0) m = std::max(m, std::log(x));
  std::vector<double> out(row.size(), 0.0);
  if (m == -kInf) return out;
  double total = 0.0;
  for (std::size_t v = 0; v < row.size(); ++v) {
    if (row[v] > 0.0) out[v] = std::exp(beta * (std::log(row[v]) - m));
    total += out[v];
  }
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> nucleus_filter(std::span<const double> row, double p) {
  if (p >= 1.0) return {row.begin(), row.end()};
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  std::vector<double> out(row.size(), 0.0);
  double kept = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    out[order[r]] = row[order[r]];
    kept += row[order[r]];
    if (kept >= p) break;
  }
  if (!(kept > 0.0)) return {row.begin(), row.end()};
  for (double& x : out) x /= kept;
  return out;
}

double sigma_max(double alpha_now, double alpha_next) {
  if (alpha_now == 0.0) return 1.0;
  return std::min(1.0, (1.0 - alpha_next) / alpha_now);
}

// ---------------------------------------------------------------------------

std::vector<double> StepParams::token_distribution(std::size_t u) const {
  auto dist = gamma->row(u);
  if (beta != 1.0) dist = tempered_scores(dist, beta);
  if (nucleus_p < 1.0) dist = nucleus_filter(dist, nucleus_p);
  return dist;
}

StepParams mdlm_step_params(const MaskedSequence& z, const PosteriorMarginals& gamma,
                            const NoiseSchedule& schedule, std::size_t t) {
  StepParams p;
  p.step = t;
  p.alpha_now = schedule.alpha(t);
  p.alpha_next = schedule.alpha(t - 1);
  p.gamma = &gamma;
  const double q = schedule.unmask_probability(t);
  check_weight(q, "unmask probability", t);
  p.unmask_prob.assign(z.size(), 0.0);
  p.remask_prob.assign(z.size(), 0.0);
  for (std::size_t u = 0; u < z.size(); ++u)
    if (z.is_masked(u)) p.unmask_prob[u] = q;
  return p;
}

StepParams sedd_step_params(const MaskedSequence& z, const PosteriorMarginals& gamma,
                            const NoiseSchedule& schedule, std::size_t t, double beta) {
  // The concrete-score scale e^-sigma / (1 - e^-sigma) is common to every
  // token at a position and cancels once the jump target is normalized.
  StepParams p = mdlm_step_params(z, gamma, schedule, t);
  p.beta = beta;
  return p;
}

StepParams remdm_step_params(const MaskedSequence& z, const PosteriorMarginals& gamma,
                             const NoiseSchedule& schedule, std::size_t t,
                             std::span<const double> sigma, double nucleus_p,
                             std::size_t prompt_length) {
  if (sigma.size() != z.size()) throw ConfigError("sigma vector length differs from the state");
  StepParams p;
  p.step = t;
  p.alpha_now = schedule.alpha(t);
  p.alpha_next = schedule.alpha(t - 1);
  p.nucleus_p = nucleus_p;
  p.gamma = &gamma;
  const double bound = sigma_max(p.alpha_now, p.alpha_next);
  p.unmask_prob.assign(z.size(), 0.0);
  p.remask_prob.assign(z.size(), 0.0);
  for (std::size_t u = 0; u < z.size(); ++u) {
    const double s = sigma[u];
    if (!(s >= 0.0) || s > bound)
      throw ConfigError("sigma_t = " + std::to_string(s) + " violates the bound " +
                        std::to_string(bound) + " at step " + std::to_string(t));
    if (z.is_masked(u)) {
      const double w = (p.alpha_next - (1.0 - s) * p.alpha_now) / (1.0 - p.alpha_now);
      check_weight(w, "unmask weight", t);
      // Rounding at s == bound can leave a few ulps below zero.
      const double stay = (1.0 - p.alpha_next - s * p.alpha_now) / (1.0 - p.alpha_now);
      check_weight(stay < 0.0 && stay > -1e-12 ? 0.0 : stay, "stay-masked weight", t);
      p.unmask_prob[u] = w;
    } else if (u >= prompt_length) {
      check_weight(s, "remask weight", t);
      p.remask_prob[u] = s;
    }
  }
  return p;
}

MaskedSequence apply_step(const MaskedSequence& z, const StepParams& params,
                          std::uint64_t seed, std::uint32_t sequence,
                          std::size_t prompt_length, std::span<double> confidence) {
  MaskedSequence next = z;
  const auto step = static_cast<std::uint32_t>(params.step);
  for (std::size_t u = prompt_length; u < z.size(); ++u) {
    if (z.is_masked(u)) {
      if (params.unmask_prob[u] <= 0.0) continue;
      RngStream rng(seed, sequence, step, static_cast<std::uint32_t>(u));
      if (!(rng.uniform() < params.unmask_prob[u])) continue;
      const auto dist = params.token_distribution(u);
      const auto v = static_cast<Token>(draw_categorical(dist, rng.uniform()));
      next.reveal(u, v);
      if (!confidence.empty()) confidence[u] = params.gamma->prob(u, v);
    } else if (params.remask_prob[u] > 0.0) {
      RngStream rng(seed, sequence, step, static_cast<std::uint32_t>(u));
      if (rng.uniform() < params.remask_prob[u]) next.mask(u);
    }
  }
  return next;
}

MaskedSequence remdm_step(const MaskedSequence& z, const PosteriorMarginals& gamma,
                          const NoiseSchedule& schedule, std::size_t t, double sigma_t,
                          double nucleus_p, std::uint64_t seed, std::uint32_t sequence,
                          std::size_t prompt_length) {
  const std::vector<double> sigma(z.size(), sigma_t);
  const auto params = remdm_step_params(z, gamma, schedule, t, sigma, nucleus_p, prompt_length);
  return apply_step(z, params, seed, sequence, prompt_length);
}

std::vector<double> remdm_conf_sigmas(const MaskedSequence& z, std::span<const double> psi,
                                      double sigma_t, std::size_t prompt_length) {
  std::vector<double> out(z.size(), 0.0);
  double lo = kInf;
  for (std::size_t u = prompt_length; u < z.size(); ++u)
    if (!z.is_masked(u)) lo = std::min(lo, psi[u]);
  if (lo == kInf) return out;  // nothing to remask
  double total = 0.0;
  for (std::size_t u = prompt_length; u < z.size(); ++u)
    if (!z.is_masked(u)) total += out[u] = std::exp(-(psi[u] - lo));
  for (double& x : out) x = x / total * sigma_t;
  return out;
}

double remdm_sigma(const SamplerConfig& config, const NoiseSchedule& schedule, std::size_t t) {
  const double capped = std::min(config.eta_cap, sigma_max(schedule.alpha(t), schedule.alpha(t - 1)));
  if (config.family == SamplerFamily::kRemdmLoop) {
    const double tau = schedule.time(t);
    return (tau > config.t_off && tau <= config.t_on) ? capped : 0.0;
  }
  return capped;
}

// ---------------------------------------------------------------------------

namespace {

void llada_step(MaskedSequence& z, const PosteriorMarginals& gamma, const SamplerConfig& config,
                std::size_t t, std::uint32_t sequence, TrajectoryRecord& rec) {
  std::vector<std::size_t> masked;
  for (std::size_t u = config.prompt.size(); u < z.size(); ++u)
    if (z.is_masked(u)) masked.push_back(u);
  if (masked.empty()) return;
  const std::size_t keep = (masked.size() + t - 1) / t;
  const auto step = static_cast<std::uint32_t>(t);

  std::vector<Token> candidate(masked.size());
  std::vector<double> conf(masked.size());
  for (std::size_t k = 0; k < masked.size(); ++k) {
    const std::size_t u = masked[k];
    RngStream rng(config.seed, sequence, step, static_cast<std::uint32_t>(u));
    auto dist = gamma.row(u);
    if (config.nucleus_p < 1.0) dist = nucleus_filter(dist, config.nucleus_p);
    candidate[k] = static_cast<Token>(draw_categorical(dist, rng.uniform()));
    conf[k] = gamma.prob(u, candidate[k]);
  }

  std::vector<std::size_t> order(masked.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (config.remask == RemaskStrategy::kLowConfidence) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  } else {
    RngStream rng(config.seed, sequence, step, static_cast<std::uint32_t>(z.size()));
    // Partial Fisher-Yates: first `keep` slots form a uniform subset.
    for (std::size_t k = 0; k < keep; ++k)
      std::swap(order[k], order[k + rng.below(order.size() - k)]);
  }
  for (std::size_t k = 0; k < keep; ++k) z.reveal(masked[order[k]], candidate[order[k]]);
  rec.unmasked[t] = keep;
}

void sequential_step(MaskedSequence& z, const PosteriorMarginals& gamma,
                     const SamplerConfig& config, std::size_t t, std::uint32_t sequence,
                     TrajectoryRecord& rec) {
  std::vector<std::size_t> masked;
  for (std::size_t u = config.prompt.size(); u < z.size(); ++u)
    if (z.is_masked(u)) masked.push_back(u);
  if (masked.empty()) return;
  const auto step = static_cast<std::uint32_t>(t);
  RngStream pick(config.seed, sequence, step, static_cast<std::uint32_t>(z.size()));
  const std::size_t u = masked[pick.below(masked.size())];
  RngStream rng(config.seed, sequence, step, static_cast<std::uint32_t>(u));
  z.reveal(u, static_cast<Token>(draw_categorical(gamma.row(u), rng.uniform())));
  rec.unmasked[t] = 1;
}

}  // namespace

TrajectoryRecord run_trajectory(const OracleChain& chain, const SamplerConfig& config,
                                std::size_t length, std::uint32_t sequence, bool keep_history,
                                const StepObserver& observer) {
  config.validate();
  const std::size_t S = config.steps;
  const std::size_t P = config.prompt.size();
  if (config.sequential && S != length - std::min(length, P))
    throw ConfigError("sequential MDLM needs steps == number of masked positions (" +
                      std::to_string(length - std::min(length, P)) + ")");
  const NoiseSchedule schedule(S);
  auto z = initial_state(config, length, chain.vocab_size());

  TrajectoryRecord rec;
  rec.mask_count.assign(S + 1, 0);
  rec.unmasked.assign(S + 1, 0);
  rec.remasked.assign(S + 1, 0);
  rec.mask_count[S] = z.mask_count();
  if (keep_history) rec.history.emplace_back(z.tokens().begin(), z.tokens().end());

  Smoother smoother(chain);
  PosteriorMarginals gamma;
  bool stale = true;
  // Posterior confidence of each revealed token at the time it was drawn.
  std::vector<double> psi(length, kInf);

  for (std::size_t t = S; t >= 1; --t) {
    // Unchanged state means unchanged gamma; skip the recomputation.
    if (stale && z.mask_count() > 0) smoother.smooth(z, gamma);
    MaskedSequence next = z;
    if (config.family == SamplerFamily::kLlada) {
      llada_step(next, gamma, config, t, sequence, rec);
    } else if (config.sequential) {
      sequential_step(next, gamma, config, t, sequence, rec);
    } else {
      StepParams params;
      switch (config.family) {
        case SamplerFamily::kMdlm:
          params = mdlm_step_params(z, gamma, schedule, t);
          break;
        case SamplerFamily::kSedd:
          params = sedd_step_params(z, gamma, schedule, t, config.beta);
          break;
        case SamplerFamily::kRemdmLoop: {
          const std::vector<double> sigma(length, remdm_sigma(config, schedule, t));
          params = remdm_step_params(z, gamma, schedule, t, sigma, config.nucleus_p, P);
          break;
        }
        case SamplerFamily::kRemdmConf: {
          const auto sigma = remdm_conf_sigmas(z, psi, remdm_sigma(config, schedule, t), P);
          params = remdm_step_params(z, gamma, schedule, t, sigma, config.nucleus_p, P);
          break;
        }
        case SamplerFamily::kLlada:
          break;
      }
      if (observer) observer(params);
      next = apply_step(z, params, config.seed, sequence, P, psi);
      for (std::size_t u = P; u < length; ++u) {
        if (z.is_masked(u) && !next.is_masked(u)) ++rec.unmasked[t];
        if (!z.is_masked(u) && next.is_masked(u)) {
          ++rec.remasked[t];
          psi[u] = kInf;
        }
      }
    }
    stale = !(next == z);
    z = std::move(next);
    rec.mask_count[t - 1] = z.mask_count();
    if (keep_history) rec.history.emplace_back(z.tokens().begin(), z.tokens().end());
  }
  if (z.mask_count() != 0)
    throw NumericsError("trajectory ended with " + std::to_string(z.mask_count()) + " masks");
  rec.final_sequence.assign(z.tokens().begin(), z.tokens().end());
  return rec;
}

SequenceBatch run_sampler(const OracleChain& chain, const SamplerConfig& config,
                          std::size_t length, std::size_t count, unsigned workers,
                          std::vector<TrajectoryRecord>* records) {
  config.validate();
  SequenceBatch out(count, length);
  if (records) records->assign(count, {});
  parallel_for(count, workers, [&](std::size_t n) {
    auto rec = run_trajectory(chain, config, length, static_cast<std::uint32_t>(n));
    std::copy(rec.final_sequence.begin(), rec.final_sequence.end(), out[n].begin());
    if (records) (*records)[n] = std::move(rec);
  });
  return out;
}

namespace {

SequenceBatch run_family(const OracleChain& chain, const SamplerConfig& config,
                         std::size_t length, std::size_t count, unsigned workers,
                         std::initializer_list<SamplerFamily> allowed, const char* name) {
  if (std::find(allowed.begin(), allowed.end(), config.family) == allowed.end())
    throw ConfigError(std::string(name) + ": config.family is " +
                      std::string(family_name(config.family)));
  return run_sampler(chain, config, length, count, workers);
}

}  // namespace

SequenceBatch sedd_sample(const OracleChain& chain, const SamplerConfig& config,
                          std::size_t length, std::size_t count, unsigned workers) {
  return run_family(chain, config, length, count, workers, {SamplerFamily::kSedd}, "sedd_sample");
}

SequenceBatch mdlm_sample(const OracleChain& chain, const SamplerConfig& config,
                          std::size_t length, std::size_t count, unsigned workers) {
  return run_family(chain, config, length, count, workers, {SamplerFamily::kMdlm}, "mdlm_sample");
}

SequenceBatch llada_sample(const OracleChain& chain, const SamplerConfig& config,
                           std::size_t length, std::size_t count, unsigned workers) {
  return run_family(chain, config, length, count, workers, {SamplerFamily::kLlada},
                    "llada_sample");
}

SequenceBatch remdm_sample(const OracleChain& chain, const SamplerConfig& config,
                           std::size_t length, std::size_t count, unsigned workers) {
  return run_family(chain, config, length, count, workers,
                    {SamplerFamily::kRemdmConf, SamplerFamily::kRemdmLoop}, "remdm_sample");
}

}  // namespace odl
