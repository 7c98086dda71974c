// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "odl/error.hpp"
#include "odl/samplers.hpp"
#include "oracles.hpp"

using namespace odl;

namespace {

SamplerConfig config_for(SamplerFamily f, std::size_t steps, std::uint64_t seed = 1) {
  SamplerConfig c;
  c.family = f;
  c.steps = steps;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("samplers") {
  TEST_CASE("linear schedule endpoints") {
    const NoiseSchedule s(8);
    CHECK(s.alpha(0) == 1.0);
    CHECK(s.alpha(8) == 0.0);
    CHECK(s.alpha(2) == doctest::Approx(0.75));
    CHECK(s.unmask_probability(8) == doctest::Approx(1.0 / 8));
    CHECK(s.unmask_probability(1) == doctest::Approx(1.0));
    CHECK(std::isinf(s.sigma(8)));
  }

  TEST_CASE("tempered scores") {
    const std::vector<double> row{0.8, 0.2};
    const auto t = tempered_scores(row, 2.0);
    CHECK(t[0] == doctest::Approx(0.64 / 0.68).epsilon(1e-14));
    CHECK(t[1] == doctest::Approx(0.04 / 0.68).epsilon(1e-14));
    CHECK(tempered_scores(row, 1.0) == row);
    const std::vector<double> r3{0.2, 0.5, 0.3};
    for (double b : {0.5, 2.0, 10.0, 1000.0}) {
      const auto x = tempered_scores(r3, b);
      CHECK(std::max_element(x.begin(), x.end()) - x.begin() == 1);
      double s = 0.0;
      for (double v : x) s += v;
      CHECK(s == doctest::Approx(1.0));
    }
  }

  TEST_CASE("nucleus filter") {
    const std::vector<double> row{0.5, 0.3, 0.2};
    const auto a = nucleus_filter(row, 0.7);
    CHECK(a[0] == doctest::Approx(0.625));
    CHECK(a[1] == doctest::Approx(0.375));
    CHECK(a[2] == 0.0);
    CHECK(nucleus_filter(row, 0.5) == std::vector<double>{1.0, 0.0, 0.0});
    CHECK(nucleus_filter(row, 1.0) == row);
    // Ties keep the lower index.
    const auto t = nucleus_filter(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 0.5);
    CHECK(t == std::vector<double>{0.5, 0.5, 0.0, 0.0});
  }

  TEST_CASE("remasking bound and unmask weight") {
    const NoiseSchedule s(5);
    CHECK(sigma_max(0.4, 0.6) == doctest::Approx(1.0));
    CHECK(sigma_max(0.8, 0.9) == doctest::Approx(0.125));
    CHECK(sigma_max(0.0, 0.2) == 1.0);

    const auto raw = oracle::random_raw(3, 2, 0.1, 1);
    const OracleChain chain(oracle::to_kernel(raw));
    MaskedSequence z({kMask, 1, kMask, 2}, 3);
    const auto g = smooth(chain, z);
    const std::vector<double> sigma(4, 0.02);
    const auto p = remdm_step_params(z, g, s, 3, sigma, 1.0);
    CHECK(p.unmask_prob[0] == doctest::Approx((0.6 - 0.98 * 0.4) / 0.6).epsilon(1e-14));
    CHECK(p.unmask_prob[0] == doctest::Approx(0.3466666666666667).epsilon(1e-14));
    CHECK(p.remask_prob[1] == doctest::Approx(0.02));
    CHECK(p.unmask_prob[1] == 0.0);

    // At t = 1 (alpha_now = 0.8, alpha_next = 1) the bound is 0.
    const std::vector<double> over(4, 0.3);
    CHECK_THROWS_AS(remdm_step_params(z, g, s, 1, over, 1.0), ConfigError);
    const NoiseSchedule ten(10);
    CHECK_THROWS_AS(remdm_step_params(z, g, ten, 2, over, 1.0), ConfigError);
  }

  TEST_CASE("sigma windows") {
    const NoiseSchedule s(100);
    auto c = config_for(SamplerFamily::kRemdmLoop, 100);
    CHECK(remdm_sigma(c, s, 60) == 0.0);
    CHECK(remdm_sigma(c, s, 55) == doctest::Approx(0.02));
    CHECK(remdm_sigma(c, s, 6) == doctest::Approx(0.02));
    CHECK(remdm_sigma(c, s, 5) == 0.0);
    c.family = SamplerFamily::kRemdmConf;
    CHECK(remdm_sigma(c, s, 90) == doctest::Approx(0.02));
    // Near t = 1 the bound is below the cap.
    CHECK(remdm_sigma(c, s, 1) == doctest::Approx(0.0));
    CHECK(remdm_sigma(c, s, 2) == doctest::Approx(std::min(0.02, 0.01 / 0.98)));
  }

  TEST_CASE("confidence remasking weights") {
    const double inf = std::numeric_limits<double>::infinity();
    const auto all = remdm_conf_sigmas(MaskedSequence::fully_masked(4, 3), std::vector<double>(4, inf), 0.02, 0);
    CHECK(all == std::vector<double>(4, 0.0));

    MaskedSequence z({0, kMask, 1, 2}, 3);
    const std::vector<double> psi{0.9, inf, 0.1, 0.5};
    const auto w = remdm_conf_sigmas(z, psi, 0.02, 1);
    CHECK(w[0] == 0.0);
    const double a = std::exp(-0.1), b = std::exp(-0.5);
    CHECK(w[2] == doctest::Approx(0.02 * a / (a + b)));
    CHECK(w[3] == doctest::Approx(0.02 * b / (a + b)));
    CHECK(w[2] > w[3]);
  }

  TEST_CASE("validation") {
    auto c = config_for(SamplerFamily::kMdlm, 0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.steps = 4;
    c.nucleus_p = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.nucleus_p = 1.0;
    c.t_on = 0.01;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_for(SamplerFamily::kSedd, 4);
    c.sequential = true;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(parse_family("remdm-LOOP") == SamplerFamily::kRemdmLoop);
    CHECK(family_name(SamplerFamily::kLlada) == "LLaDA");
    CHECK_THROWS(parse_family("GPT"));
  }

  TEST_CASE("reductions: SEDD at beta 1 and ReMDM at sigma 0 equal MDLM") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(12, 4, 0.02, 5)));
    const auto mdlm = run_sampler(chain, config_for(SamplerFamily::kMdlm, 16, 3), 40, 20, 1);
    CHECK(run_sampler(chain, config_for(SamplerFamily::kSedd, 16, 3), 40, 20, 1) == mdlm);
    for (auto f : {SamplerFamily::kRemdmConf, SamplerFamily::kRemdmLoop}) {
      auto c = config_for(f, 16, 3);
      c.eta_cap = 0.0;
      CHECK(run_sampler(chain, c, 40, 20, 1) == mdlm);
    }
    auto sharp = config_for(SamplerFamily::kSedd, 16, 3);
    sharp.beta = 3.0;
    CHECK(run_sampler(chain, sharp, 40, 20, 1) != mdlm);
  }

  TEST_CASE("determinism across worker counts") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(10, 3, 0.05, 8)));
    for (auto f : {SamplerFamily::kSedd, SamplerFamily::kMdlm, SamplerFamily::kLlada,
                   SamplerFamily::kRemdmConf, SamplerFamily::kRemdmLoop}) {
      const auto c = config_for(f, 8, 21);
      CHECK(run_sampler(chain, c, 30, 12, 1) == run_sampler(chain, c, 30, 12, 3));
    }
  }

  TEST_CASE("mask count is monotone without remasking and hits zero") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(8, 3, 0.05, 2)));
    for (auto f : {SamplerFamily::kSedd, SamplerFamily::kMdlm, SamplerFamily::kLlada}) {
      for (std::size_t S : {1u, 3u, 10u, 50u}) {
        const auto rec = run_trajectory(chain, config_for(f, S, 5), 25, 0, true);
        CHECK(rec.mask_count[S] == 25);
        CHECK(rec.mask_count[0] == 0);
        for (std::size_t t = S; t >= 1; --t) CHECK(rec.mask_count[t - 1] <= rec.mask_count[t]);
        CHECK(rec.history.size() == S + 1);
      }
    }
  }

  TEST_CASE("ReMDM remasks and still finishes") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(8, 3, 0.05, 2)));
    auto c = config_for(SamplerFamily::kRemdmLoop, 64, 9);
    c.eta_cap = 0.2;
    std::size_t remasked = 0;
    for (std::uint32_t n = 0; n < 10; ++n) {
      const auto rec = run_trajectory(chain, c, 40, n);
      CHECK(rec.mask_count[0] == 0);
      for (auto r : rec.remasked) remasked += r;
      for (std::size_t t = 0; t < rec.remasked.size(); ++t) {
        const double tau = static_cast<double>(t) / 64.0;
        if (!(tau > c.t_off && tau <= c.t_on)) CHECK(rec.remasked[t] == 0);
      }
    }
    CHECK(remasked > 0);
  }

  TEST_CASE("LLaDA reveals ceil(masked/t) per step") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(8, 3, 0.05, 4)));
    auto c = config_for(SamplerFamily::kLlada, 10, 2);
    const auto one = run_trajectory(chain, c, 10, 0);
    for (std::size_t t = 1; t <= 10; ++t) CHECK(one.unmasked[t] == 1);
    c.steps = 4;
    const auto r = run_trajectory(chain, c, 10, 0);
    // 10 masked, t=4 -> 3, 7 left, t=3 -> 3, 4 left, t=2 -> 2, t=1 -> 2.
    CHECK(r.unmasked[4] == 3);
    CHECK(r.unmasked[3] == 3);
    CHECK(r.unmasked[2] == 2);
    CHECK(r.unmasked[1] == 2);
    c.remask = RemaskStrategy::kRandom;
    CHECK(run_trajectory(chain, c, 10, 0).mask_count[0] == 0);
  }

  TEST_CASE("prompts are kept and length is checked") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(8, 3, 0.05, 4)));
    for (auto f : {SamplerFamily::kMdlm, SamplerFamily::kLlada, SamplerFamily::kRemdmConf}) {
      auto c = config_for(f, 12, 3);
      c.prompt = {7, 7, 1};
      c.eta_cap = 0.5;
      const auto batch = run_sampler(chain, c, 15, 8, 1);
      for (std::size_t n = 0; n < batch.size(); ++n) {
        CHECK(batch[n][0] == 7);
        CHECK(batch[n][1] == 7);
        CHECK(batch[n][2] == 1);
      }
      c.prompt.assign(16, 0);
      CHECK_THROWS(run_sampler(chain, c, 15, 1, 1));
    }
  }

  TEST_CASE("family-specific entry points check the family") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(4, 2, 0.05, 4)));
    CHECK_THROWS_AS(sedd_sample(chain, config_for(SamplerFamily::kMdlm, 4), 5, 1), ConfigError);
    CHECK_NOTHROW(remdm_sample(chain, config_for(SamplerFamily::kRemdmLoop, 4), 5, 1));
  }

  TEST_CASE("one step draws positions independently from pi0") {
    const auto raw = oracle::random_raw(3, 2, 0.2, 31);
    const auto P = oracle::effective(raw);
    const auto pi0 = oracle::dense_stationary(P);
    const OracleChain chain(oracle::to_kernel(raw), pi0);
    std::vector<double> prod(27);
    for (std::size_t k = 0; k < 27; ++k) prod[k] = pi0[k / 9] * pi0[(k / 3) % 3] * pi0[k % 3];
    // Ten independent replicates at alpha = 0.01; three or more rejections
    // happen with probability ~1e-4 under the null.
    int rejected = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto batch = run_sampler(chain, config_for(SamplerFamily::kMdlm, 1, seed), 3, 30000, 1);
      std::vector<std::uint64_t> obs(27, 0);
      for (std::size_t n = 0; n < batch.size(); ++n) ++obs[oracle::index_of(batch[n], 3)];
      const auto chi = oracle::chi_square(obs, prod, 0.01);
      rejected += chi.accept ? 0 : 1;
    }
    CHECK(rejected <= 2);
  }

  TEST_CASE("sequential unmasking samples the joint exactly") {
    const auto raw = oracle::random_raw(3, 2, 0.1, 77);
    const auto P = oracle::effective(raw);
    const auto pi0 = oracle::dense_stationary(P);
    const auto p = oracle::joint(pi0, P, 4);
    const OracleChain chain(oracle::to_kernel(raw), pi0);
    auto c = config_for(SamplerFamily::kMdlm, 4, 12);
    c.sequential = true;
    const auto batch = run_sampler(chain, c, 4, 100000, 1);
    std::vector<std::uint64_t> obs(p.size(), 0);
    for (std::size_t n = 0; n < batch.size(); ++n) ++obs[oracle::index_of(batch[n], 3)];
    const auto chi = oracle::chi_square(obs, p, 0.01);
    INFO("chi2 = " << chi.statistic << " critical = " << chi.critical);
    CHECK(chi.accept);
    c.steps = 3;
    CHECK_THROWS_AS(run_sampler(chain, c, 4, 1, 1), ConfigError);
  }

  TEST_CASE("observer sees the per-step parameters") {
    const OracleChain chain(oracle::to_kernel(oracle::random_raw(5, 2, 0.05, 4)));
    std::vector<std::size_t> steps;
    run_trajectory(chain, config_for(SamplerFamily::kMdlm, 6, 1), 9, 0, false,
                   [&](const StepParams& p) {
                     steps.push_back(p.step);
                     CHECK(p.alpha_next >= p.alpha_now);
                   });
    CHECK(steps == std::vector<std::size_t>{6, 5, 4, 3, 2, 1});
  }
}
