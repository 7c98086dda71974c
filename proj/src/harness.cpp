// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include "odl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "odl/error.hpp"
#include "odl/kernel_io.hpp"
#include "odl/wire.hpp"

namespace odl {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

// Smallest P'(j|i) over the full matrix without materializing it: the
// minimum is either on a stored edge or at the smallest nu outside the row.
double min_effective_prob(const TransitionKernel& kernel) {
  const std::uint32_t V = kernel.vocab_size();
  const double eps = kernel.epsilon();
  const auto nu = kernel.nu();
  std::vector<Token> by_nu(V);
  std::iota(by_nu.begin(), by_nu.end(), Token{0});
  std::sort(by_nu.begin(), by_nu.end(), [&](Token a, Token b) { return nu[a] < nu[b]; });
  double lo = std::numeric_limits<double>::infinity();
  for (Token i = 0; i < V; ++i) {
    for (const Edge& e : kernel.row(i)) lo = std::min(lo, (1.0 - eps) * e.prob + eps * nu[e.successor]);
    for (Token j : by_nu) {
      if (!kernel.in_support(i, j)) {
        lo = std::min(lo, eps * nu[j]);
        break;
      }
    }
  }
  return lo;
}

double max_row_deviation(const TransitionKernel& kernel) {
  const double eps = kernel.epsilon();
  double nu_total = 0.0;
  for (double x : kernel.nu()) nu_total += x;
  double worst = 0.0;
  for (Token i = 0; i < kernel.vocab_size(); ++i) {
    double s = 0.0;
    for (const Edge& e : kernel.row(i)) s += e.prob;
    worst = std::max(worst, std::abs((1.0 - eps) * s + eps * nu_total - 1.0));
  }
  return worst;
}

}  // namespace

BigramCounts count_corpus(const std::filesystem::path& corpus, const OracleOptions& options) {
  if (options.format == CorpusFormat::kText8) return count_text8_file(corpus, options.text_mode);
  return count_token_file(corpus, options.vocab_size);
}

OracleBuild build_oracle(const BigramCounts& counts, const OracleOptions& options) {
  if (options.epsilon == 0.0 && !options.no_teleport)
    throw ConfigError("epsilon = 0 requires the explicit no-teleport option");
  if (counts.total_tokens == 0) throw InputError("corpus contains no tokens");
  auto sp = sparsify(counts, options.mass, options.percentile);
  auto nu = smoothed_unigram(counts);
  KernelOptions kopt;
  kopt.allow_zero_teleport = options.no_teleport;
  auto rows = sp.rows;
  TransitionKernel kernel(std::move(rows), options.epsilon, std::move(nu), kopt);

  const auto agreement = stationary_agreement(kernel, options.tol, options.max_iters);
  OracleChain chain(kernel, agreement.runs.front().pi);

  json hist = json::object();
  std::map<std::size_t, std::size_t> h;
  std::vector<std::size_t> observed;
  for (std::size_t k : sp.k_star)
    if (k > 0) {
      ++h[k];
      observed.push_back(k);
    }
  for (const auto& [k, n] : h) hist[std::to_string(k)] = n;
  std::sort(observed.begin(), observed.end());

  const double min_p = min_effective_prob(chain.kernel());
  const double row_dev = max_row_deviation(chain.kernel());
  const double residual = agreement.runs.front().residual;
  json summary = {
      {"vocab_size", kernel.vocab_size()},
      {"K", sp.K},
      {"epsilon", kernel.epsilon()},
      {"mass_threshold", options.mass},
      {"percentile", options.percentile},
      {"total_tokens", counts.total_tokens},
      {"unigram_fallback_rows", sp.unigram_fallback_rows},
      {"k_star_histogram", hist},
      {"k_star_stats",
       observed.empty()
           ? json::object()
           : json{{"min", observed.front()},
                  {"median", nearest_rank(observed, 0.5)},
                  {"p90", nearest_rank(observed, 0.9)},
                  {"max", observed.back()},
                  {"mean", std::accumulate(observed.begin(), observed.end(), 0.0) /
                               static_cast<double>(observed.size())}}},
      {"kernel_digest", hex64(kernel_digest(chain.kernel()))},
      {"sanity",
       {{"stationary_residual", residual},
        {"stationary_iterations", agreement.runs.front().iterations},
        {"stationary_inits", agreement.runs.size()},
        {"stationary_max_pairwise_l1", agreement.max_pairwise_l1},
        {"stationary_agreement_ok", agreement.max_pairwise_l1 < 1e-8},
        {"max_row_sum_deviation", row_dev},
        {"row_stochastic_ok", row_dev < 1e-12},
        {"min_effective_prob", min_p},
        {"strictly_positive", min_p > 0.0}}},
  };
  return {std::move(chain), std::move(sp), std::move(summary)};
}

OracleChain load_oracle(const std::filesystem::path& path, double tol, std::size_t max_iters) {
  return OracleChain(load_kernel(path), tol, max_iters);
}

// ---------------------------------------------------------------------------

SamplerConfig sampler_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sampler config must be an object");
  static const std::set<std::string> known = {"family",  "steps",     "beta",
                                              "eta_cap", "t_on",      "t_off",
                                              "nucleus_p", "remask_strategy", "prompt",
                                              "seed",    "sequential"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown sampler config key '" + key + "'");
  SamplerConfig c;
  try {
    if (j.contains("family")) c.family = parse_family(j["family"].get<std::string>());
    if (j.contains("steps")) c.steps = j["steps"].get<std::size_t>();
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("eta_cap")) c.eta_cap = j["eta_cap"].get<double>();
    if (j.contains("t_on")) c.t_on = j["t_on"].get<double>();
    if (j.contains("t_off")) c.t_off = j["t_off"].get<double>();
    if (j.contains("nucleus_p")) c.nucleus_p = j["nucleus_p"].get<double>();
    if (j.contains("remask_strategy")) {
      const auto s = j["remask_strategy"].get<std::string>();
      if (s == "low-confidence") c.remask = RemaskStrategy::kLowConfidence;
      else if (s == "random") c.remask = RemaskStrategy::kRandom;
      else throw ConfigError("remask_strategy must be 'low-confidence' or 'random'");
    }
    if (j.contains("prompt")) c.prompt = j["prompt"].get<std::vector<Token>>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("sequential")) c.sequential = j["sequential"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sampler config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const SamplerConfig& c) {
  return {
      {"family", std::string(family_name(c.family))},
      {"steps", c.steps},
      {"beta", c.beta},
      {"eta_cap", c.eta_cap},
      {"t_on", c.t_on},
      {"t_off", c.t_off},
      {"nucleus_p", c.nucleus_p},
      {"remask_strategy", c.remask == RemaskStrategy::kRandom ? "random" : "low-confidence"},
      {"prompt", c.prompt},
      {"seed", c.seed},
      {"sequential", c.sequential},
  };
}

json SweepCell::canonical() const {
  if (is_ar()) return {{"family", "AR"}, {"beta", ar_beta}, {"seed", seed}};
  return to_json(*sampler);
}

namespace {

std::vector<double> number_list(const json& entry, const char* key, double fallback) {
  if (!entry.contains(key)) return {fallback};
  const auto& v = entry[key];
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array() || v.empty()) throw ConfigError(std::string("'") + key + "' must be a number or non-empty list");
  return v.get<std::vector<double>>();
}

std::string format_param(double x) {
  std::ostringstream out;
  out << x;
  return out.str();
}

}  // namespace

SweepSpec SweepSpec::from_json(const json& j) {
  static const std::set<std::string> known = {"oracle", "dataset", "T",        "N",
                                              "seeds",  "steps",   "families", "save_samples"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown sweep key '" + key + "'");
  SweepSpec s;
  try {
    if (j.contains("oracle")) s.oracle = j["oracle"].get<std::string>();
    if (j.contains("dataset")) s.dataset = j["dataset"].get<std::string>();
    if (j.contains("T")) s.length = j["T"].get<std::size_t>();
    if (j.contains("N")) s.count = j["N"].get<std::size_t>();
    if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("steps")) s.steps = j["steps"].get<std::vector<std::size_t>>();
    if (j.contains("families")) s.families = j["families"];
    if (j.contains("save_samples")) s.save_samples = j["save_samples"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep spec: ") + e.what());
  }
  if (!s.families.is_array()) throw ConfigError("'families' must be a list");
  if (s.length == 0 || s.count == 0) throw ConfigError("T and N must be positive");
  return s;
}

std::vector<SweepCell> SweepSpec::expand() const {
  std::vector<SweepCell> cells;
  for (const auto& entry : families) {
    if (!entry.is_object() || !entry.contains("family"))
      throw ConfigError("each family entry needs a 'family' field");
    const auto name = entry["family"].get<std::string>();
    const auto betas = number_list(entry, "beta", 1.0);
    if (name == "AR") {
      for (double b : betas) {
        if (!(b > 0.0)) throw ConfigError("AR beta must be positive");
        for (auto seed : seeds) {
          SweepCell cell;
          cell.model = b == 1.0 ? "AR" : "AR (beta=" + format_param(b) + ")";
          cell.ar_beta = b;
          cell.seed = seed;
          cells.push_back(std::move(cell));
        }
      }
      continue;
    }
    const auto nucleus = number_list(entry, "nucleus_p", 1.0);
    std::vector<std::size_t> family_steps = steps;
    if (entry.contains("steps")) family_steps = entry["steps"].get<std::vector<std::size_t>>();
    // Remaining scalar keys pass straight into the sampler config.
    json base = json::object();
    for (const auto& [key, value] : entry.items())
      if (key != "beta" && key != "nucleus_p" && key != "steps") base[key] = value;
    for (double b : betas)
      for (double p : nucleus)
        for (std::size_t S : family_steps)
          for (auto seed : seeds) {
            json cfg = base;
            cfg["beta"] = b;
            cfg["nucleus_p"] = p;
            cfg["steps"] = S;
            cfg["seed"] = seed;
            SweepCell cell;
            cell.sampler = sampler_config_from_json(cfg);
            cell.seed = seed;
            cell.model = std::string(family_name(cell.sampler->family));
            std::vector<std::string> tags;
            if (b != 1.0) tags.push_back("beta=" + format_param(b));
            if (p != 1.0) tags.push_back("p=" + format_param(p));
            if (cell.sampler->remask == RemaskStrategy::kRandom) tags.push_back("random");
            if (!cell.sampler->prompt.empty()) tags.push_back("prompt");
            if (!tags.empty()) {
              cell.model += " (";
              for (std::size_t k = 0; k < tags.size(); ++k) cell.model += (k ? " " : "") + tags[k];
              cell.model += ")";
            }
            cells.push_back(std::move(cell));
          }
  }
  return cells;
}

std::string cell_hash(const SweepCell& cell, const std::string& oracle_digest,
                      std::size_t length, std::size_t count) {
  const json key = {{"cell", cell.canonical()},
                    {"oracle", oracle_digest},
                    {"T", length},
                    {"N", count}};
  return hex64(wire::fnv1a(key.dump()));
}

SequenceBatch sample_cell(const OracleChain& chain, const SweepCell& cell, std::size_t length,
                          std::size_t count, unsigned workers) {
  if (cell.is_ar()) return sample_ar_sharpened(chain, cell.ar_beta, length, count, cell.seed, workers);
  return run_sampler(chain, *cell.sampler, length, count, workers);
}

SweepOutcome run_sweep(const SweepSpec& spec, const SweepOptions& options) {
  const auto cells = spec.expand();
  std::filesystem::create_directories(options.output_dir);
  SweepOutcome outcome;
  outcome.cells = cells.size();
  outcome.csv = options.output_dir / "results.csv";
  outcome.manifest = options.output_dir / "manifest.jsonl";

  std::optional<OracleChain> chain;
  std::string digest = "none";
  if (!cells.empty()) {
    chain.emplace(load_oracle(spec.oracle));
    digest = hex64(kernel_digest(chain->kernel()));
  }

  // Completed cells from earlier runs, keyed by config hash.
  std::unordered_map<std::string, json> done;
  if (std::filesystem::exists(outcome.manifest)) {
    std::ifstream in(outcome.manifest);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto entry = json::parse(line);
        if (entry.value("status", "") == "ok") done[entry.at("hash").get<std::string>()] = entry;
      } catch (const json::exception&) {
        // A torn final line from an interrupted run; the cell is recomputed.
      }
    }
  }

  std::ofstream manifest(outcome.manifest, std::ios::app);
  if (!manifest) throw InputError("cannot open " + outcome.manifest.string());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    const auto hash = cell_hash(cell, digest, spec.length, spec.count);
    if (done.count(hash)) {
      ++outcome.skipped;
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    json entry = {{"hash", hash},
                  {"cell", cell.canonical()},
                  {"model", cell.model},
                  {"oracle", spec.oracle.string()},
                  {"oracle_digest", digest},
                  {"T", spec.length},
                  {"N", spec.count},
                  {"version", kVersion}};
    try {
      const auto batch = sample_cell(*chain, cell, spec.length, spec.count, options.workers);
      auto report = evaluate(batch, *chain);
      report.dataset = spec.dataset;
      report.type = cell.is_ar() ? "Baseline" : "Diffusion";
      report.model = cell.model;
      if (!cell.is_ar()) {
        report.steps = cell.sampler->steps;
        report.seed = cell.seed;
      }
      report.check();
      entry["status"] = "ok";
      entry["report"] = to_json(report);
      if (spec.save_samples) {
        const auto dir = options.output_dir / "samples";
        std::filesystem::create_directories(dir);
        const auto path = dir / (hash + ".bin");
        write_token_stream(path, batch);
        entry["samples"] = path.string();
      }
      ++outcome.computed;
    } catch (const std::exception& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
      ++outcome.failed;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    entry["wall_seconds"] = secs;
    manifest << entry.dump() << '\n';
    manifest.flush();
    if (entry["status"] == "ok") done[hash] = entry;
    if (options.log) {
      std::ostringstream msg;
      msg << "[" << (c + 1) << "/" << cells.size() << "] " << cell.model;
      if (!cell.is_ar()) msg << " S=" << cell.sampler->steps;
      msg << " seed=" << cell.seed << " " << entry["status"].get<std::string>();
      if (entry.contains("report")) msg << " kl=" << entry["report"]["kl_rate"].get<double>();
      if (entry.contains("error")) msg << " (" << entry["error"].get<std::string>() << ")";
      msg << " " << secs << "s";
      options.log(msg.str());
    }
  }

  // The CSV is always rebuilt from the manifest in cell order, so a resumed
  // sweep writes the same bytes as an uninterrupted one.
  std::ofstream csv(outcome.csv, std::ios::trunc);
  csv << kCsvHeader << '\n';
  for (const auto& cell : cells) {
    const auto it = done.find(cell_hash(cell, digest, spec.length, spec.count));
    if (it != done.end()) csv << to_csv_row(report_from_json(it->second["report"])) << '\n';
  }
  return outcome;
}

// ---------------------------------------------------------------------------

std::map<Token, std::string> text8_vocab_map() {
  std::map<Token, std::string> m;
  m[0] = " ";
  for (Token t = 1; t < kText8Vocab; ++t) m[t] = std::string(1, static_cast<char>('a' + t - 1));
  return m;
}

std::map<Token, std::string> load_vocab_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary map " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("vocabulary map: " + std::string(e.what()));
  }
  std::map<Token, std::string> m;
  if (j.is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k) m[static_cast<Token>(k)] = j[k].get<std::string>();
  } else if (j.is_object()) {
    for (const auto& [key, value] : j.items()) {
      std::size_t used = 0;
      unsigned long id = 0;
      try {
        id = std::stoul(key, &used);
      } catch (...) {
        used = 0;
      }
      if (used != key.size()) throw InputError("vocabulary map key '" + key + "' is not an id");
      m[static_cast<Token>(id)] = value.get<std::string>();
    }
  } else {
    throw InputError("vocabulary map must be a JSON object or array");
  }
  return m;
}

ExportStats export_text(const SequenceBatch& batch, const std::map<Token, std::string>& vocab,
                        std::ostream& out) {
  ExportStats stats;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    for (Token t : batch[n]) {
      const auto it = vocab.find(t);
      if (it == vocab.end()) {
        out << "<unk:" << t << ">";
        ++stats.missing;
      } else {
        out << it->second;
      }
    }
    out << '\n';
    ++stats.documents;
  }
  return stats;
}

std::filesystem::path resolve_output_dir(const std::string& requested,
                                         const std::filesystem::path& fallback) {
  if (!requested.empty()) return requested;
  if (const char* env = std::getenv("ODL_OUTPUT_DIR"); env && *env) return env;
  return fallback;
}

}  // namespace odl
