// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "physfuse/image.hpp"

namespace physfuse {

struct ImagePair {
  std::string name;
  ImageTensor ir;
  ImageTensor vis;
};

/// File names (.pgm/.png) present in both directories, sorted. Throws
/// DatasetError if either directory is missing or no name is shared.
std::vector<std::string> list_pairs(const std::filesystem::path& ir_dir,
                                    const std::filesystem::path& vis_dir);

/// Loads every shared pair. Throws PairError when a pair's sizes differ.
std::vector<ImagePair> load_pairs(const std::filesystem::path& ir_dir,
                                  const std::filesystem::path& vis_dir);

/// Deterministic synthetic scene pair: the visible image carries textured
/// background, rectangles and stripes; the infrared image carries smooth
/// warm blobs over a dim gradient, partly co-located with the rectangles.
ImagePair synth_pair(std::size_t size, std::uint64_t seed, std::size_t index);

/// Writes `count` synthetic pairs as ir/pair_NN.pgm and vis/pair_NN.pgm
/// under `root`.
void write_toy_dataset(const std::filesystem::path& root, std::size_t count, std::size_t size,
                       std::uint64_t seed);

}  // namespace physfuse
