// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odl/kernel.hpp"
#include "odl/posterior.hpp"
#include "odl/types.hpp"

namespace odl {

enum class SamplerFamily { kSedd, kMdlm, kLlada, kRemdmConf, kRemdmLoop };
enum class RemaskStrategy { kLowConfidence, kRandom };

std::string_view family_name(SamplerFamily family);
SamplerFamily parse_family(std::string_view name);

/// Linear survival schedule alpha_t = 1 - t/S on the step grid t = 0..S,
/// exactly 1 at t = 0 and exactly 0 at t = S. Diffusion time is t/S.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::size_t steps);

  std::size_t steps() const { return steps_; }
  double alpha(std::size_t t) const;
  double time(std::size_t t) const { return static_cast<double>(t) / static_cast<double>(steps_); }
  /// sigma(t) = -log alpha_t (+inf at t = S).
  double sigma(std::size_t t) const;
  /// Absorbing reverse step t -> t-1: (alpha_{t-1} - alpha_t) / (1 - alpha_t).
  double unmask_probability(std::size_t t) const;

 private:
  std::size_t steps_;
};

struct SamplerConfig {
  SamplerFamily family = SamplerFamily::kMdlm;
  std::size_t steps = 128;
  /// SEDD score temperature (power applied to the oracle score).
  double beta = 1.0;
  /// ReMDM remasking cap and loop window in diffusion time.
  double eta_cap = 0.02;
  double t_on = 0.55;
  double t_off = 0.05;
  double nucleus_p = 1.0;
  RemaskStrategy remask = RemaskStrategy::kLowConfidence;
  /// Leading revealed tokens; never remasked.
  std::vector<Token> prompt;
  std::uint64_t seed = 0;
  /// MDLM only: reveal exactly one uniformly chosen masked position per
  /// step. Requires steps == T - prompt length.
  bool sequential = false;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

/// Per-step diagnostics of one trajectory. Index s runs over the step grid:
/// mask_count[s] is the number of masks in z_s (size S+1), unmasked[s] and
/// remasked[s] count the changes made by the step s -> s-1 (entry 0 unused).
struct TrajectoryRecord {
  std::vector<std::size_t> mask_count;
  std::vector<std::size_t> unmasked;
  std::vector<std::size_t> remasked;
  std::vector<Token> final_sequence;
  /// z_s for s = S..0 when history was requested.
  std::vector<std::vector<Token>> history;
};

// ---------------------------------------------------------------------------
// Row transforms

/// normalize(row^beta). beta == 1 returns the input unchanged.
std::vector<double> tempered_scores(std::span<const double> row, double beta);

/// Keeps the smallest descending prefix with cumulative mass >= p (the
/// crossing token included), zeroes the rest and renormalizes. p == 1
/// returns the input unchanged. Ties keep the lower index first.
std::vector<double> nucleus_filter(std::span<const double> row, double p);

/// Largest sigma keeping every ReMDM mixture weight nonnegative:
/// min(1, (1 - alpha_next) / alpha_now), or 1 when alpha_now == 0.
double sigma_max(double alpha_now, double alpha_next);

// ---------------------------------------------------------------------------
// Per-step categorical parameters

/// Everything a factorized step samples from: per-position unmask
/// probabilities for masked positions, remask probabilities for revealed
/// ones, and the token distribution drawn at an unmasked position.
struct StepParams {
  std::size_t step = 0;
  double alpha_now = 0.0;
  double alpha_next = 0.0;
  std::vector<double> unmask_prob;
  std::vector<double> remask_prob;
  double beta = 1.0;
  double nucleus_p = 1.0;
  const PosteriorMarginals* gamma = nullptr;

  /// gamma_u after temperature and nucleus transforms.
  std::vector<double> token_distribution(std::size_t u) const;
};

/// MDLM step t -> t-1: masked positions unmask with the absorbing reverse
/// probability and draw from gamma.
StepParams mdlm_step_params(const MaskedSequence& z, const PosteriorMarginals& gamma,
                            const NoiseSchedule& schedule, std::size_t t);

/// SEDD tau-leaping step: as MDLM with tempered scores.
StepParams sedd_step_params(const MaskedSequence& z, const PosteriorMarginals& gamma,
                            const NoiseSchedule& schedule, std::size_t t, double beta);

/// ReMDM step with per-position remasking probabilities `sigma` (entries at
/// masked positions enter the masked-branch weight). Throws ConfigError if
/// any sigma exceeds sigma_max, NumericsError if a mixture weight leaves
/// [0, 1].
StepParams remdm_step_params(const MaskedSequence& z, const PosteriorMarginals& gamma,
                             const NoiseSchedule& schedule, std::size_t t,
                             std::span<const double> sigma, double nucleus_p,
                             std::size_t prompt_length = 0);

/// Samples z_{t-1} from `params` given z_t. Position u uses the stream
/// (seed, sequence, t, u). Newly drawn tokens report gamma_u(token) through
/// `confidence` when it is non-empty.
MaskedSequence apply_step(const MaskedSequence& z, const StepParams& params,
                          std::uint64_t seed, std::uint32_t sequence,
                          std::size_t prompt_length, std::span<double> confidence = {});

/// ReMDM step with a scalar sigma_t applied to every revealed non-prompt
/// position.
MaskedSequence remdm_step(const MaskedSequence& z, const PosteriorMarginals& gamma,
                          const NoiseSchedule& schedule, std::size_t t, double sigma_t,
                          double nucleus_p, std::uint64_t seed, std::uint32_t sequence,
                          std::size_t prompt_length = 0);

/// ReMDM-conf per-position remask probabilities: sigma_t times the softmax
/// of -psi over positions, with psi = +inf (weight 0) at masked and prompt
/// positions. All-masked input yields all zeros.
std::vector<double> remdm_conf_sigmas(const MaskedSequence& z, std::span<const double> psi,
                                      double sigma_t, std::size_t prompt_length);

/// Scalar sigma_t for ReMDM at step t -> t-1.
double remdm_sigma(const SamplerConfig& config, const NoiseSchedule& schedule, std::size_t t);

// ---------------------------------------------------------------------------
// Samplers

using StepObserver = std::function<void(const StepParams&)>;

/// One trajectory of any family. `observer` sees the parameters of every
/// factorized step (not called for LLaDA or sequential MDLM).
TrajectoryRecord run_trajectory(const OracleChain& chain, const SamplerConfig& config,
                                std::size_t length, std::uint32_t sequence,
                                bool keep_history = false, const StepObserver& observer = {});

/// N trajectories in parallel; sequence n is independent of worker count.
SequenceBatch run_sampler(const OracleChain& chain, const SamplerConfig& config,
                          std::size_t length, std::size_t count, unsigned workers = 0,
                          std::vector<TrajectoryRecord>* records = nullptr);

SequenceBatch sedd_sample(const OracleChain& chain, const SamplerConfig& config,
                          std::size_t length, std::size_t count, unsigned workers = 0);
SequenceBatch mdlm_sample(const OracleChain& chain, const SamplerConfig& config,
                          std::size_t length, std::size_t count, unsigned workers = 0);
SequenceBatch llada_sample(const OracleChain& chain, const SamplerConfig& config,
                           std::size_t length, std::size_t count, unsigned workers = 0);
SequenceBatch remdm_sample(const OracleChain& chain, const SamplerConfig& config,
                           std::size_t length, std::size_t count, unsigned workers = 0);

}  // namespace odl
