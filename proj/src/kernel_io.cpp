// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#include "odl/kernel_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "odl/error.hpp"
#include "odl/wire.hpp"

namespace odl {

void write_kernel(std::ostream& out, const TransitionKernel& kernel) {
  const std::uint32_t V = kernel.vocab_size();
  out.write(kKernelMagic, 4);
  wire::put_u32(out, kKernelVersion);
  wire::put_u32(out, V);
  wire::put_u32(out, kernel.sparsity());
  wire::put_f64(out, kernel.epsilon());
  for (std::size_t off : kernel.offsets()) wire::put_u64(out, off);
  for (const Edge& e : kernel.edges()) {
    wire::put_u32(out, e.successor);
    wire::put_f64(out, e.prob);
  }
  for (double x : kernel.nu()) wire::put_f64(out, x);
  if (!out) throw InputError("write_kernel: stream failure");
}

TransitionKernel read_kernel(std::istream& in) {
  wire::Reader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kKernelMagic, 4) != 0) throw InputError("bad kernel magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kKernelVersion)
    throw InputError("unsupported kernel version " + std::to_string(version), 4);
  const std::uint32_t V = r.u32();
  const std::uint32_t K = r.u32();
  const double epsilon = r.f64();
  if (V == 0) throw InputError("kernel header declares V=0", 8);

  std::vector<std::uint64_t> offsets(V + 1);
  for (auto& off : offsets) off = r.u64();
  if (offsets[0] != 0) throw InputError("row offset table must start at 0", 24);
  for (std::uint32_t i = 0; i < V; ++i) {
    if (offsets[i + 1] < offsets[i] || offsets[i + 1] - offsets[i] > K)
      throw InputError("row offset table is not monotone or exceeds K", 24 + 8 * (i + 1));
  }
  std::vector<SparseRow> rows(V);
  for (std::uint32_t i = 0; i < V; ++i) {
    rows[i].resize(offsets[i + 1] - offsets[i]);
    for (Edge& e : rows[i]) {
      e.successor = r.u32();
      e.prob = r.f64();
    }
  }
  std::vector<double> nu(V);
  for (double& x : nu) x = r.f64();
  KernelOptions options;
  options.allow_zero_teleport = (epsilon == 0.0);
  return TransitionKernel(std::move(rows), epsilon, std::move(nu), options);
}

void save_kernel(const std::filesystem::path& path, const TransitionKernel& kernel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_kernel(out, kernel);
}

TransitionKernel load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_kernel(in);
}

std::string kernel_to_json(const TransitionKernel& kernel) {
  nlohmann::json j;
  j["format"] = "odl-kernel";
  j["version"] = kKernelVersion;
  j["vocab_size"] = kernel.vocab_size();
  j["K"] = kernel.sparsity();
  j["epsilon"] = kernel.epsilon();
  auto rows = nlohmann::json::array();
  for (std::uint32_t i = 0; i < kernel.vocab_size(); ++i) {
    auto row = nlohmann::json::array();
    for (const Edge& e : kernel.row(i)) row.push_back({e.successor, e.prob});
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  j["nu"] = std::vector<double>(kernel.nu().begin(), kernel.nu().end());
  return j.dump(1);
}

TransitionKernel kernel_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("kernel JSON: ") + e.what(), e.byte);
  }
  if (j.value("format", "") != "odl-kernel") throw InputError("not an odl-kernel JSON document");
  std::vector<SparseRow> rows;
  for (const auto& row : j.at("rows")) {
    SparseRow r;
    for (const auto& e : row) r.push_back({e.at(0).get<Token>(), e.at(1).get<double>()});
    rows.push_back(std::move(r));
  }
  const double epsilon = j.at("epsilon").get<double>();
  KernelOptions options;
  options.allow_zero_teleport = (epsilon == 0.0);
  return TransitionKernel(std::move(rows), epsilon, j.at("nu").get<std::vector<double>>(),
                          options);
}

std::uint64_t kernel_digest(const TransitionKernel& kernel) {
  std::ostringstream out(std::ios::binary);
  write_kernel(out, kernel);
  return wire::fnv1a(out.str());
}

}  // namespace odl
