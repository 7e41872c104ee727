// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "physfuse/config.hpp"
#include "physfuse/dataset.hpp"
#include "physfuse/metrics.hpp"
#include "physfuse/ot.hpp"
#include "physfuse/param_store.hpp"
#include "physfuse/vbe.hpp"

namespace physfuse {

inline constexpr const char* kVbeCheckpoint = "vbe.pfck";
inline constexpr const char* kDiffusionCheckpoint = "diffusion.pfck";
inline constexpr const char* kConfigFile = "config.toml";
inline constexpr const char* kManifestFile = "manifest.json";

/// A trained model directory: both parameter stores plus the config they
/// were trained with.
struct Models {
  RunConfig config;
  ParamStore vbe;
  ParamStore diffusion;
};

/// Reads DIR/config.toml, DIR/vbe.pfck and DIR/diffusion.pfck. Throws
/// CheckpointError if parameter names or shapes disagree with the
/// architecture the config describes.
Models load_models(const std::filesystem::path& dir);

/// Throws CheckpointError unless `store` has exactly the names and shapes
/// of `expected`.
void check_architecture(const ParamStore& store, const ParamStore& expected, const std::string& what);

struct TrainOptions {
  bool interleaved = false;
};

struct TrainReport {
  std::vector<VbeLossTerms> vbe_losses;
  std::vector<double> diffusion_losses;
  /// Literal mode only: AG of the decoded sample after each iteration.
  std::vector<double> sample_ag;
};

/// Pairs with the infrared side replaced by its tile-wise transport onto
/// the visible intensities, both padded to the latent grid.
std::vector<TrainingPair> prepare_training_pairs(const std::vector<ImagePair>& pairs, const RunConfig& config,
                                                 bool align);

/// Two-stage training (VBE, then the noise predictor on frozen posterior
/// means), or the interleaved loop when `interleaved` is set.
/// Writes vbe.pfck, diffusion.pfck, config.toml, manifest.json and
/// per-stage CSV logs into `out_dir`. DatasetError before any training if
/// the dataset is missing or empty.
TrainReport cmd_train(const RunConfig& config, const std::filesystem::path& out_dir,
                      const TrainOptions& opts = {});

/// Stage 1 alone; writes vbe.pfck, config.toml and vbe_log.csv.
TrainReport cmd_train_vbe(const RunConfig& config, const std::filesystem::path& out_dir);

/// Stage 2 alone against an existing vbe.pfck in `out_dir`.
TrainReport cmd_train_diffusion(const RunConfig& config, const std::filesystem::path& out_dir);

struct FuseOptions {
  std::uint64_t seed = 0;
  /// When set, the decoded corrected estimate of every step is written as
  /// step_NNN.pgm into this directory.
  std::optional<std::filesystem::path> trajectory_dir;
};

/// Inference on one pair: encode (raw infrared unless ot_at_inference),
/// sample with physics correction, decode, clamp to [0, 1], crop back to
/// the input size. `config` supplies the physics and sampling settings;
/// the networks come from `models`.
ImageTensor fuse_images(const Models& models, const RunConfig& config, const ImageTensor& ir,
                        const ImageTensor& vis, const FuseOptions& opts = {});

struct AblationRow {
  std::string name;
  bool heat = false;
  bool stru = false;
  bool con = false;
  bool tpg = false;
  metrics::MetricReport mean;
};

/// Fuses every pair under the grid {none, heat, heat+stru, all} x
/// {TPG on, TPG off (gamma = 0)} and returns the per-configuration metric
/// means, TPG-on rows first.
std::vector<AblationRow> cmd_ablate(const Models& models, const RunConfig& config,
                                    const std::vector<ImagePair>& pairs, std::uint64_t seed);

std::string ablation_csv(const std::vector<AblationRow>& rows);

struct VerifyReport {
  std::vector<std::pair<std::string, ot::BoundReport>> alignment;
  std::optional<double> redundant_mi_bound;
  std::string redundant_mi_error;
  std::vector<double> mu_variance;
  std::vector<double> sigma_sq;
};

/// Alignment bound per pair and, when `models` is given, the redundant
/// information bound on the posterior means of all pairs.
VerifyReport cmd_verify(const RunConfig& config, const std::vector<ImagePair>& pairs, const Models* models);

std::string to_json(const VerifyReport& report);
std::string to_json(const ot::BoundReport& report);

}  // namespace physfuse
