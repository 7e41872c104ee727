// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "physfuse/image.hpp"

namespace physfuse {

/// Reads an 8-bit binary PGM (P5, maxval 255) or an 8-bit PNG. Values are
/// mapped to [0,1] as byte/255; colour PNGs are reduced to luminance.
/// Throws IoError for missing or truncated files and FormatError for other
/// encodings, bit depths, or colour types.
ImageTensor load_image(const std::filesystem::path& path);

/// Writes a single-channel image as round(v*255). The format follows the
/// extension: ".png" writes PNG, anything else PGM (P5). Values outside
/// [0,1] (or non-finite) raise RangeError; clamp explicitly before saving.
void save_image(const ImageTensor& img, const std::filesystem::path& path);

/// The bytes save_image would write for each pixel.
std::vector<std::uint8_t> quantize(const ImageTensor& img);

}  // namespace physfuse
