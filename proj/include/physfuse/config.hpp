// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "physfuse/diffusion.hpp"
#include "physfuse/ot.hpp"
#include "physfuse/physics.hpp"
#include "physfuse/vbe.hpp"

namespace physfuse {

struct IoConfig {
  std::string ir_dir;
  std::string vis_dir;
  std::string out_dir;
};

/// Every tunable of a run. The text form is one `section.key = value` per
/// line; `#` starts a comment, strings are double-quoted, lists are
/// comma-separated inside quotes. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  VbeConfig vbe;
  DiffusionConfig diffusion;
  PhysicsGuidanceConfig physics;
  PriorOptions priors;
  PhysicsSpace physics_space = PhysicsSpace::kLatent;
  TauDirection tau_direction = TauDirection::kFromStart;
  ot::OtConfig ot;
  bool ot_at_inference = false;
  IoConfig io;

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

/// Parses the text form on top of the defaults. Throws ConfigError with
/// the offending line number on syntax errors, unknown or repeated keys,
/// and malformed values.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Full text form (every key, doubles with 17 significant digits), so
/// parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// Names of all accepted keys, in serialization order.
std::vector<std::string> config_keys();

}  // namespace physfuse
