// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "physfuse/param_store.hpp"

namespace physfuse {

/// Binary parameter checkpoint, all integers little-endian:
///
///   "PFCK" | version u32 | entry count u32 |
///   per entry: name length u32 | UTF-8 name | rank u32 | dims u32[rank] |
///              float64 payload (row-major)
///
/// Only parameter values are stored; gradients and Adam moments are not.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& store);
ParamStore decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);

/// Throws IoError when unreadable and CheckpointError when malformed.
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace physfuse
