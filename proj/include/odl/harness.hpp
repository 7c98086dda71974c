// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "odl/corpus.hpp"
#include "odl/kernel.hpp"
#include "odl/metrics.hpp"
#include "odl/samplers.hpp"

namespace odl {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Oracle construction

enum class CorpusFormat { kText8, kTokens };

struct OracleOptions {
  CorpusFormat format = CorpusFormat::kText8;
  TextMode text_mode = TextMode::kLenient;
  /// Required for token streams; text8 is always 27.
  std::uint32_t vocab_size = kText8Vocab;
  /// mass 1 with percentile 1 keeps every observed successor.
  double mass = 1.0;
  double percentile = 1.0;
  double epsilon = 1e-4;
  /// Allows epsilon = 0 (no positivity guarantee).
  bool no_teleport = false;
  double tol = 1e-11;
  std::size_t max_iters = 100000;
};

struct OracleBuild {
  OracleChain chain;
  SparsifyResult sparsity;
  nlohmann::json summary;
};

/// counts -> sparsify -> teleport (nu = add-one unigram) -> stationary, plus
/// the human-readable summary with the k* histogram and sanity checks.
OracleBuild build_oracle(const BigramCounts& counts, const OracleOptions& options);
BigramCounts count_corpus(const std::filesystem::path& corpus, const OracleOptions& options);

/// Loads a kernel file and recomputes pi0.
OracleChain load_oracle(const std::filesystem::path& path, double tol = 1e-11,
                        std::size_t max_iters = 100000);

// ---------------------------------------------------------------------------
// Configuration records

/// Throws ConfigError on unknown keys or bad values.
SamplerConfig sampler_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SamplerConfig& config);

/// One sweep cell: AR baseline (sampler unset) or a diffusion sampler.
struct SweepCell {
  std::string model;  // CSV label, e.g. "SEDD" or "SEDD (beta=2)"
  std::optional<SamplerConfig> sampler;
  double ar_beta = 1.0;  // AR only
  std::uint64_t seed = 0;

  bool is_ar() const { return !sampler.has_value(); }
  nlohmann::json canonical() const;
};

struct SweepSpec {
  std::filesystem::path oracle;
  std::string dataset = "Text8 (Char)";
  std::size_t length = 1024;
  std::size_t count = 512;
  std::vector<std::uint64_t> seeds{123};
  std::vector<std::size_t> steps{8, 16, 32, 64, 128, 256, 512, 1024};
  /// Family entries: {"family": "SEDD", "beta": [1, 2]}, {"family": "AR"}, ...
  nlohmann::json families = nlohmann::json::array();
  bool save_samples = false;

  static SweepSpec from_json(const nlohmann::json& j);
  /// Every cell in canonical order; validates each sampler config.
  std::vector<SweepCell> expand() const;
};

struct SweepOptions {
  std::filesystem::path output_dir;
  unsigned workers = 0;
  /// Progress lines (one per cell); silent when unset.
  std::function<void(const std::string&)> log;
};

struct SweepOutcome {
  std::size_t cells = 0;
  std::size_t computed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::filesystem::path csv;
  std::filesystem::path manifest;
};

/// Config hash of a cell under a given oracle and sweep shape.
std::string cell_hash(const SweepCell& cell, const std::string& oracle_digest,
                      std::size_t length, std::size_t count);

/// Runs all cells not already completed in <output_dir>/manifest.jsonl and
/// rewrites <output_dir>/results.csv from the manifest in cell order.
SweepOutcome run_sweep(const SweepSpec& spec, const SweepOptions& options);

/// Samples one cell.
SequenceBatch sample_cell(const OracleChain& chain, const SweepCell& cell, std::size_t length,
                          std::size_t count, unsigned workers);

// ---------------------------------------------------------------------------
// Text export

struct ExportStats {
  std::size_t documents = 0;
  std::size_t missing = 0;  // ids absent from the vocabulary map
};

/// id -> string map from JSON: an object {"0": " ", "1": "a", ...} or an
/// array indexed by id.
std::map<Token, std::string> load_vocab_map(const std::filesystem::path& path);
std::map<Token, std::string> text8_vocab_map();

/// One line per sequence. Missing ids print as "<unk:ID>".
ExportStats export_text(const SequenceBatch& batch, const std::map<Token, std::string>& vocab,
                        std::ostream& out);

/// Output directory: explicit value, else ODL_OUTPUT_DIR, else `fallback`.
std::filesystem::path resolve_output_dir(const std::string& requested,
                                         const std::filesystem::path& fallback);

}  // namespace odl
