// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The odl Authors

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "odl/kernel.hpp"

namespace odl {

/// Binary kernel container, all fields little-endian:
///
///   magic "SMKT" | u32 version | u32 V | u32 K | f64 epsilon
///   u64 row_offsets[V+1]
///   (u32 successor, f64 prob) pairs[row_offsets[V]]
///   f64 nu[V]
inline constexpr char kKernelMagic[4] = {'S', 'M', 'K', 'T'};
inline constexpr std::uint32_t kKernelVersion = 1;

void write_kernel(std::ostream& out, const TransitionKernel& kernel);
TransitionKernel read_kernel(std::istream& in);

void save_kernel(const std::filesystem::path& path, const TransitionKernel& kernel);
TransitionKernel load_kernel(const std::filesystem::path& path);

/// Lossless JSON dump meant for small vocabularies.
std::string kernel_to_json(const TransitionKernel& kernel);
TransitionKernel kernel_from_json(const std::string& text);

/// Stable 64-bit FNV-1a digest of the binary container.
std::uint64_t kernel_digest(const TransitionKernel& kernel);

}  // namespace odl
