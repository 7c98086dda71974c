// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

// odl: build oracles, run samplers, evaluate and sweep.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "odl/corpus.hpp"
#include "odl/error.hpp"
#include "odl/harness.hpp"
#include "odl/kernel.hpp"
#include "odl/kernel_io.hpp"
#include "odl/metrics.hpp"
#include "odl/posterior.hpp"
#include "odl/rng.hpp"
#include "odl/samplers.hpp"

namespace {

using nlohmann::json;

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw odl::InputError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw odl::InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw odl::ConfigError(path.string() + ": " + e.what());
  }
}

// Random kernel for self-checks: each row keeps `K` random successors with
// Dirichlet-like weights; nu is random and strictly positive.
odl::OracleChain random_chain(std::uint32_t V, std::uint32_t K, double eps, std::uint64_t seed) {
  std::vector<odl::SparseRow> rows(V);
  for (std::uint32_t i = 0; i < V; ++i) {
    odl::RngStream rng(seed, i, 0, 0);
    std::vector<odl::Token> ids(V);
    for (std::uint32_t j = 0; j < V; ++j) ids[j] = j;
    std::shuffle(ids.begin(), ids.end(), rng);
    double total = 0.0;
    for (std::uint32_t k = 0; k < K; ++k) {
      const double w = -std::log(1.0 - rng.uniform());
      rows[i].push_back({ids[k], w});
      total += w;
    }
    for (auto& e : rows[i]) e.prob /= total;
    std::sort(rows[i].begin(), rows[i].end(),
              [](const odl::Edge& a, const odl::Edge& b) { return a.successor < b.successor; });
  }
  odl::RngStream rng(seed, V, 1, 0);
  std::vector<double> nu(V);
  double total = 0.0;
  for (auto& x : nu) total += x = 0.05 + rng.uniform();
  for (auto& x : nu) x /= total;
  return odl::OracleChain(odl::TransitionKernel(std::move(rows), eps, std::move(nu)));
}

odl::MaskedSequence random_mask(const odl::OracleChain& chain, std::size_t T, odl::RngStream& rng) {
  // A path from the chain keeps revealed evidence consistent.
  std::vector<odl::Token> x(T);
  x[0] = chain.sample_initial(rng);
  for (std::size_t t = 1; t < T; ++t) x[t] = chain.kernel().sample_next(x[t - 1], rng);
  const auto mode = rng.below(4);
  for (std::size_t t = 0; t < T; ++t) {
    if (mode == 0 || (mode != 1 && rng.uniform() < 0.5)) x[t] = odl::kMask;
  }
  return odl::MaskedSequence(std::move(x), chain.vocab_size());
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

int run_verify(std::size_t instances, std::uint64_t seed) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    if (!ok) ++failures;
  };

  double worst = 0.0;
  for (std::size_t n = 0; n < instances; ++n) {
    odl::RngStream rng(seed, static_cast<std::uint32_t>(n), 0, 1);
    const auto V = static_cast<std::uint32_t>(3 + rng.below(3));
    const std::size_t T = 4 + rng.below(3);
    const double eps = rng.below(2) ? 0.1 : 0.01;
    const auto chain = random_chain(V, 1 + static_cast<std::uint32_t>(rng.below(V)), eps, seed + n);
    const auto z = random_mask(chain, T, rng);
    worst = std::max(worst, odl::max_prob_deviation(odl::smooth(chain, z),
                                                    odl::brute_force_posterior(chain, z)));
  }
  report("posterior-vs-enumeration", worst < 1e-9,
         std::to_string(instances) + " instances, max |dgamma| = " + sci(worst));

  worst = 0.0;
  for (std::size_t n = 0; n < 50; ++n) {
    odl::RngStream rng(seed, static_cast<std::uint32_t>(n), 0, 2);
    const auto chain = random_chain(32, 8, 0.01, seed + 1000 + n);
    const auto z = random_mask(chain, 16, rng);
    worst = std::max(worst, odl::max_log_deviation(odl::smooth(chain, z),
                                                   odl::dense_smooth(chain, z)));
  }
  report("sparse-vs-dense", worst < 1e-9, "50 instances, max |dlog gamma| = " + sci(worst));

  // Step-parameter identities on a mid-sized chain.
  const auto chain = random_chain(8, 3, 0.05, seed + 7);
  odl::SamplerConfig mdlm;
  mdlm.steps = 12;
  mdlm.seed = seed;
  auto sedd = mdlm;
  sedd.family = odl::SamplerFamily::kSedd;
  auto remdm = mdlm;
  remdm.family = odl::SamplerFamily::kRemdmLoop;
  remdm.eta_cap = 0.0;
  std::vector<odl::StepParams> a, b, c;
  std::vector<std::vector<std::vector<double>>> da, db, dc;
  auto grab = [](std::vector<odl::StepParams>& ps, std::vector<std::vector<std::vector<double>>>& ds) {
    return [&](const odl::StepParams& p) {
      ps.push_back(p);
      std::vector<std::vector<double>> rows;
      for (std::size_t u = 0; u < p.unmask_prob.size(); ++u)
        if (p.unmask_prob[u] > 0.0) rows.push_back(p.token_distribution(u));
      ds.push_back(std::move(rows));
    };
  };
  const auto ra = odl::run_trajectory(chain, mdlm, 10, 0, false, grab(a, da));
  const auto rb = odl::run_trajectory(chain, sedd, 10, 0, false, grab(b, db));
  const auto rc = odl::run_trajectory(chain, remdm, 10, 0, false, grab(c, dc));
  auto same = [](const std::vector<odl::StepParams>& x, const std::vector<odl::StepParams>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k].unmask_prob != y[k].unmask_prob || x[k].remask_prob != y[k].remask_prob) return false;
    return true;
  };
  report("sedd-beta1-equals-mdlm", same(a, b) && da == db && ra.final_sequence == rb.final_sequence,
         std::to_string(a.size()) + " steps compared bitwise");
  report("remdm-sigma0-equals-mdlm", same(a, c) && da == dc && ra.final_sequence == rc.final_sequence,
         std::to_string(a.size()) + " steps compared bitwise");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampler-correctness lab for discrete diffusion over a known Markov chain"};
  app.set_config("--config", "", "Read flags from a TOML/INI file");
  app.require_subcommand(1);
  unsigned workers = 0;
  app.add_option("--workers", workers, "Worker threads (default: ODL_WORKERS or all cores)");

  // build-oracle ------------------------------------------------------------
  auto* build = app.add_subcommand("build-oracle", "Corpus -> sparse teleport kernel file");
  std::string corpus, kernel_out, summary_out, json_out, format = "text8", mode = "lenient";
  odl::OracleOptions oopt;
  build->add_option("--corpus", corpus, "Text8-style text or token stream")->required()->check(CLI::ExistingFile);
  build->add_option("--format", format, "text8 | tokens")->check(CLI::IsMember({"text8", "tokens"}));
  build->add_option("--text-mode", mode, "strict | lenient (text8 only)")->check(CLI::IsMember({"strict", "lenient"}));
  build->add_option("--vocab-size", oopt.vocab_size, "Vocabulary size of a token stream");
  build->add_option("--mass", oopt.mass, "Cumulative mass for k*")->check(CLI::Range(0.0, 1.0));
  build->add_option("--percentile", oopt.percentile, "Quantile of k* giving K")->check(CLI::Range(0.0, 1.0));
  build->add_option("--epsilon", oopt.epsilon, "Teleport weight")->check(CLI::Range(0.0, 1.0));
  build->add_flag("--no-teleport", oopt.no_teleport, "Permit epsilon = 0");
  build->add_option("--out", kernel_out, "Kernel file")->required();
  build->add_option("--summary", summary_out, "Summary JSON (default: <out>.summary.json)");
  build->add_option("--dump-json", json_out, "Also write a lossless JSON kernel dump");

  // sample ------------------------------------------------------------------
  auto* sample = app.add_subcommand("sample", "Draw sequences with one sampler");
  std::string oracle, sampler_file, samples_out, family = "MDLM";
  std::size_t length = 1024, count = 512;
  odl::SamplerConfig scfg;
  double ar_beta = 1.0;
  sample->add_option("--oracle", oracle, "Kernel file")->required()->check(CLI::ExistingFile);
  sample->add_option("--sampler-config", sampler_file, "Sampler config JSON (overrides family flags)");
  sample->add_option("--family", family, "AR | SEDD | MDLM | LLaDA | ReMDM-conf | ReMDM-loop");
  sample->add_option("--steps", scfg.steps, "Diffusion steps S");
  sample->add_option("--beta", scfg.beta, "SEDD temperature / AR sharpening");
  sample->add_option("--nucleus-p", scfg.nucleus_p, "Nucleus mass (ReMDM, LLaDA)");
  sample->add_option("--eta-cap", scfg.eta_cap, "ReMDM remasking cap");
  sample->add_option("--t-on", scfg.t_on, "ReMDM-loop window end");
  sample->add_option("--t-off", scfg.t_off, "ReMDM-loop window start");
  sample->add_option("--seed", scfg.seed, "Seed");
  sample->add_option("-T,--length", length, "Sequence length");
  sample->add_option("-N,--count", count, "Number of sequences");
  sample->add_option("--out", samples_out, "Token stream output")->required();

  // evaluate ----------------------------------------------------------------
  auto* eval = app.add_subcommand("evaluate", "Metric suite for a token stream of samples");
  std::string samples_in, eval_format = "csv", dataset = "custom", model = "samples", pooling = "per-sequence";
  eval->add_option("--oracle", oracle, "Kernel file")->required()->check(CLI::ExistingFile);
  eval->add_option("--samples", samples_in, "Token stream")->required()->check(CLI::ExistingFile);
  eval->add_option("-T,--length", length, "Sequence length")->required();
  eval->add_option("--format", eval_format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  eval->add_option("--dataset", dataset, "Dataset label");
  eval->add_option("--model", model, "Model label");
  eval->add_option("--ngram-pooling", pooling, "per-sequence | pooled")
      ->check(CLI::IsMember({"per-sequence", "pooled"}));

  // sweep -------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "Run a resumable step sweep from a JSON spec");
  std::string spec_file, out_dir;
  sweep->add_option("--spec", spec_file, "Sweep spec JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out-dir", out_dir, "Output directory (default: ODL_OUTPUT_DIR or ./sweep-out)");

  // export-text -------------------------------------------------------------
  auto* exp = app.add_subcommand("export-text", "Token stream -> one text line per sequence");
  std::string vocab = "text8", text_out;
  std::uint32_t vocab_size = odl::kText8Vocab;
  exp->add_option("--samples", samples_in, "Token stream")->required()->check(CLI::ExistingFile);
  exp->add_option("-T,--length", length, "Sequence length")->required();
  exp->add_option("--vocab", vocab, "Vocabulary map JSON, or 'text8'");
  exp->add_option("--vocab-size", vocab_size, "Id bound used to validate the stream");
  exp->add_option("--out", text_out, "Text output")->required();

  // verify ------------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "Brute-force and identity self-checks");
  std::size_t instances = 200;
  std::uint64_t verify_seed = 1;
  verify->add_option("--instances", instances, "Enumerable posterior instances");
  verify->add_option("--seed", verify_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      oopt.format = format == "text8" ? odl::CorpusFormat::kText8 : odl::CorpusFormat::kTokens;
      oopt.text_mode = mode == "strict" ? odl::TextMode::kStrict : odl::TextMode::kLenient;
      if (oopt.format == odl::CorpusFormat::kText8) oopt.vocab_size = odl::kText8Vocab;
      const auto counts = odl::count_corpus(corpus, oopt);
      auto result = odl::build_oracle(counts, oopt);
      odl::save_kernel(kernel_out, result.chain.kernel());
      if (!json_out.empty()) {
        std::ofstream out(json_out);
        out << odl::kernel_to_json(result.chain.kernel()) << '\n';
      }
      result.summary["corpus"] = corpus;
      result.summary["kernel_file"] = kernel_out;
      write_json(summary_out.empty() ? kernel_out + ".summary.json" : summary_out, result.summary);
      std::cout << result.summary.dump(2) << '\n';
      return 0;
    }
    if (*sample) {
      const auto chain = odl::load_oracle(oracle);
      const auto start = std::chrono::steady_clock::now();
      odl::SequenceBatch batch;
      json meta;
      if (!sampler_file.empty()) scfg = odl::sampler_config_from_json(read_json(sampler_file));
      if (sampler_file.empty() && family == "AR") {
        ar_beta = scfg.beta;
        batch = odl::sample_ar_sharpened(chain, ar_beta, length, count, scfg.seed, workers);
        meta = {{"family", "AR"}, {"beta", ar_beta}, {"seed", scfg.seed}};
      } else {
        if (sampler_file.empty()) scfg.family = odl::parse_family(family);
        batch = odl::run_sampler(chain, scfg, length, count, workers);
        meta = odl::to_json(scfg);
        meta["schedule"] = "linear";
      }
      odl::write_token_stream(samples_out, batch);
      meta["T"] = length;
      meta["N"] = count;
      meta["oracle"] = oracle;
      meta["wall_seconds"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      meta["version"] = odl::kVersion;
      write_json(samples_out + ".meta.json", meta);
      std::cerr << "wrote " << count << " sequences to " << samples_out << '\n';
      return 0;
    }
    if (*eval) {
      const auto chain = odl::load_oracle(oracle);
      const auto batch = odl::load_sequences(samples_in, chain.vocab_size(), length);
      auto report = odl::evaluate(batch, chain,
                                  pooling == "pooled" ? odl::NgramPooling::kPooled
                                                      : odl::NgramPooling::kPerSequence);
      report.dataset = dataset;
      report.model = model;
      // The sidecar written by `sample` fills in labels not given explicitly.
      if (const auto meta_path = samples_in + ".meta.json"; std::filesystem::exists(meta_path)) {
        const auto meta = read_json(meta_path);
        if (eval->count("--model") == 0 && meta.contains("family"))
          report.model = meta["family"].get<std::string>();
        if (meta.value("family", "") != "AR" && meta.contains("steps"))
          report.steps = meta["steps"].get<std::size_t>();
        if (meta.contains("seed")) report.seed = meta["seed"].get<std::uint64_t>();
      }
      report.type = report.model == "AR" ? "Baseline" : "Diffusion";
      report.check();
      if (eval_format == "json") {
        std::cout << odl::to_json(report).dump(2) << '\n';
      } else {
        std::cout << odl::kCsvHeader << '\n' << odl::to_csv_row(report) << '\n';
      }
      return 0;
    }
    if (*sweep) {
      const auto spec = odl::SweepSpec::from_json(read_json(spec_file));
      odl::SweepOptions opts;
      opts.output_dir = odl::resolve_output_dir(out_dir, "sweep-out");
      opts.workers = workers;
      opts.log = [](const std::string& line) { std::cerr << line << std::endl; };
      const auto outcome = odl::run_sweep(spec, opts);
      std::cout << "cells " << outcome.cells << ", computed " << outcome.computed << ", skipped "
                << outcome.skipped << ", failed " << outcome.failed << "\ncsv " << outcome.csv.string()
                << "\nmanifest " << outcome.manifest.string() << '\n';
      return outcome.failed == 0 ? 0 : 1;
    }
    if (*exp) {
      const auto batch = odl::load_sequences(samples_in, vocab_size, length);
      const auto map = vocab == "text8" ? odl::text8_vocab_map() : odl::load_vocab_map(vocab);
      std::ofstream out(text_out);
      if (!out) throw odl::InputError("cannot open " + text_out);
      const auto stats = odl::export_text(batch, map, out);
      if (stats.missing > 0)
        std::cerr << "warning: " << stats.missing << " ids missing from the vocabulary map\n";
      std::cerr << "wrote " << stats.documents << " documents to " << text_out << '\n';
      return 0;
    }
    if (*verify) return run_verify(instances, verify_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
