// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "odl/error.hpp"
#include "odl/harness.hpp"
#include "odl/kernel_io.hpp"
#include "support.hpp"

using namespace odl;
using testing_support::read_bytes;
using testing_support::TempDir;

namespace {

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("oracle from a tiny corpus equals normalized counts") {
    const std::string text = "abab aab";
    const auto counts = count_bigrams(encode_text8(text), kText8Vocab);
    OracleOptions opt;
    opt.epsilon = 0.01;
    const auto built = build_oracle(counts, opt);
    const auto& k = built.chain.kernel();
    // a -> b x3, a -> a x1, a -> space x0; b -> a x1, b -> space x1; space -> a x1.
    CHECK(k.sparse_prob(1, 2) == doctest::Approx(0.75));
    CHECK(k.sparse_prob(1, 1) == doctest::Approx(0.25));
    CHECK(k.sparse_prob(2, 1) == doctest::Approx(0.5));
    CHECK(k.sparse_prob(2, 0) == doctest::Approx(0.5));
    CHECK(k.sparse_prob(0, 1) == doctest::Approx(1.0));
    // nu is the add-one unigram: counts {space:1, a:4, b:3} + 1 over 27 + 8.
    CHECK(k.nu()[1] == doctest::Approx(5.0 / 35.0));
    CHECK(k.nu()[5] == doctest::Approx(1.0 / 35.0));
    CHECK(built.summary["sanity"]["strictly_positive"].get<bool>());
    CHECK(built.summary["sanity"]["stationary_agreement_ok"].get<bool>());
    CHECK(built.summary["k_star_histogram"]["2"].get<int>() == 2);

    OracleOptions zero = opt;
    zero.epsilon = 0.0;
    CHECK_THROWS_AS(build_oracle(counts, zero), ConfigError);
  }

  TEST_CASE("sampler config parsing") {
    const auto c = sampler_config_from_json(nlohmann::json::parse(
        R"({"family": "llada", "steps": 32, "remask_strategy": "random", "seed": 4})"));
    CHECK(c.family == SamplerFamily::kLlada);
    CHECK(c.steps == 32);
    CHECK(c.remask == RemaskStrategy::kRandom);
    CHECK(sampler_config_from_json(to_json(c)).seed == 4);
    CHECK_THROWS_AS(sampler_config_from_json(nlohmann::json::parse(R"({"stpes": 3})")), ConfigError);
    CHECK_THROWS_AS(sampler_config_from_json(nlohmann::json::parse(R"({"remask_strategy": "x"})")),
                    ConfigError);
  }

  TEST_CASE("sweep expansion and labels") {
    SweepSpec spec = SweepSpec::from_json(nlohmann::json::parse(R"({
      "T": 16, "N": 4, "seeds": [1, 2], "steps": [4, 8],
      "families": [{"family": "AR"}, {"family": "SEDD", "beta": [1, 2]},
                   {"family": "ReMDM-conf", "nucleus_p": [0.9], "steps": [4]}]
    })"));
    const auto cells = spec.expand();
    // AR: 2 seeds; SEDD: 2 betas x 2 steps x 2 seeds; ReMDM: 1 x 1 x 2.
    CHECK(cells.size() == 2 + 8 + 2);
    std::set<std::string> labels;
    for (const auto& c : cells) labels.insert(c.model);
    CHECK(labels.count("AR"));
    CHECK(labels.count("SEDD"));
    CHECK(labels.count("SEDD (beta=2)"));
    CHECK(labels.count("ReMDM-conf (p=0.9)"));
    CHECK_THROWS_AS(SweepSpec::from_json(nlohmann::json::parse(R"({"Steps": [1]})")), ConfigError);
    CHECK(cell_hash(cells[0], "d", 16, 4) != cell_hash(cells[1], "d", 16, 4));
    CHECK(cell_hash(cells[0], "d", 16, 4) != cell_hash(cells[0], "d", 16, 5));
  }

  TEST_CASE("empty sweep writes only the header") {
    TempDir dir;
    SweepSpec spec;
    SweepOptions opt;
    opt.output_dir = dir / "out";
    const auto r = run_sweep(spec, opt);
    CHECK(r.cells == 0);
    CHECK(read_bytes(r.csv) == std::string(kCsvHeader) + "\n");
  }

  TEST_CASE("resumed sweep reproduces the CSV byte for byte") {
    TempDir dir;
    const auto counts = count_bigrams(encode_text8("the quick brown fox jumps over the lazy dog and the cat"),
                                      kText8Vocab);
    const auto built = build_oracle(counts, OracleOptions{});
    save_kernel(dir / "k.bin", built.chain.kernel());

    SweepSpec spec = SweepSpec::from_json(nlohmann::json::parse(R"({
      "T": 24, "N": 6, "seeds": [5], "steps": [4, 12],
      "families": [{"family": "AR"}, {"family": "MDLM"}, {"family": "ReMDM-loop"}]
    })"));
    spec.oracle = dir / "k.bin";
    SweepOptions opt;
    opt.output_dir = dir / "run";
    const auto first = run_sweep(spec, opt);
    CHECK(first.computed == 5);
    CHECK(first.failed == 0);
    const std::string csv = read_bytes(first.csv);
    CHECK(lines_of(csv).size() == 6);

    // Drop the last manifest entry, as if the run had been killed before it.
    auto manifest = lines_of(read_bytes(first.manifest));
    manifest.pop_back();
    {
      std::ofstream out(first.manifest, std::ios::trunc);
      for (const auto& l : manifest) out << l << '\n';
    }
    const auto second = run_sweep(spec, opt);
    CHECK(second.skipped == 4);
    CHECK(second.computed == 1);
    CHECK(read_bytes(second.csv) == csv);

    const auto third = run_sweep(spec, opt);
    CHECK(third.computed == 0);
    CHECK(read_bytes(third.csv) == csv);
  }

  TEST_CASE("text export") {
    const SequenceBatch b(3, std::vector<Token>{8, 9, 0, 1, 27, 2});
    std::ostringstream out;
    const auto stats = export_text(b, text8_vocab_map(), out);
    CHECK(out.str() == "hi \na<unk:27>b\n");
    CHECK(stats.documents == 2);
    CHECK(stats.missing == 1);

    TempDir dir;
    testing_support::write_bytes(dir / "v.json", R"({"0": "<s>", "1": "x"})");
    const auto m = load_vocab_map(dir / "v.json");
    CHECK(m.at(0) == "<s>");
    testing_support::write_bytes(dir / "a.json", R"(["p", "q"])");
    CHECK(load_vocab_map(dir / "a.json").at(1) == "q");
    testing_support::write_bytes(dir / "bad.json", R"({"zero": "p"})");
    CHECK_THROWS_AS(load_vocab_map(dir / "bad.json"), InputError);
  }

  TEST_CASE("output directory resolution") {
    ::unsetenv("ODL_OUTPUT_DIR");
    CHECK(resolve_output_dir("", "fallback") == "fallback");
    ::setenv("ODL_OUTPUT_DIR", "/tmp/from-env", 1);
    CHECK(resolve_output_dir("", "fallback") == "/tmp/from-env");
    CHECK(resolve_output_dir("explicit", "fallback") == "explicit");
    ::unsetenv("ODL_OUTPUT_DIR");
  }
}
