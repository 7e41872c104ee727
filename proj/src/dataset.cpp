// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "physfuse/error.hpp"
#include "physfuse/image_io.hpp"
#include "physfuse/rng.hpp"

namespace physfuse {
namespace {

std::set<std::string> image_names(const std::filesystem::path& dir) {
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".png")) names.insert(e.path().filename().string());
  }
  return names;
}

}  // namespace

std::vector<std::string> list_pairs(const std::filesystem::path& ir_dir, const std::filesystem::path& vis_dir) {
  for (const auto& dir : {ir_dir, vis_dir}) {
    if (!std::filesystem::is_directory(dir)) {
      throw DatasetError(fmt::format("dataset directory '{}' does not exist", dir.string()));
    }
  }
  const auto ir = image_names(ir_dir);
  const auto vis = image_names(vis_dir);
  std::vector<std::string> shared;
  std::set_intersection(ir.begin(), ir.end(), vis.begin(), vis.end(), std::back_inserter(shared));
  if (shared.empty()) {
    throw DatasetError(fmt::format("no matching image names in '{}' and '{}'", ir_dir.string(), vis_dir.string()));
  }
  return shared;
}

std::vector<ImagePair> load_pairs(const std::filesystem::path& ir_dir, const std::filesystem::path& vis_dir) {
  std::vector<ImagePair> pairs;
  for (const auto& name : list_pairs(ir_dir, vis_dir)) {
    ImagePair p{name, load_image(ir_dir / name), load_image(vis_dir / name)};
    if (!p.ir.same_shape(p.vis)) {
      throw PairError(fmt::format("pair '{}': infrared {}x{} vs visible {}x{}", name, p.ir.height(), p.ir.width(),
                                  p.vis.height(), p.vis.width()));
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

ImagePair synth_pair(std::size_t size, std::uint64_t seed, std::size_t index) {
  Rng rng = Rng(seed).substream(fmt::format("synth.{}", index));
  const double n = static_cast<double>(size);
  ImagePair p{fmt::format("pair_{:02d}.pgm", index), ImageTensor(size, size, 1), ImageTensor(size, size, 1)};

  // Visible: lit gradient, fine stripes, bright and dark rectangles.
  const double gx = rng.uniform(-0.3, 0.3);
  const double gy = rng.uniform(-0.3, 0.3);
  const double freq = rng.uniform(0.15, 0.35);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double u = static_cast<double>(c) / n - 0.5;
      const double v = static_cast<double>(r) / n - 0.5;
      const double phase = freq * (std::cos(angle) * static_cast<double>(c) + std::sin(angle) * static_cast<double>(r));
      p.vis(r, c) = 0.45 + gx * u + gy * v + 0.08 * std::sin(phase);
    }
  }
  struct Box {
    std::size_t r0, c0, h, w;
  };
  std::vector<Box> boxes;
  const std::size_t box_count = 2 + rng.index(2);
  for (std::size_t b = 0; b < box_count; ++b) {
    Box box{rng.index(size * 3 / 4), rng.index(size * 3 / 4), size / 8 + rng.index(size / 4), size / 8 + rng.index(size / 4)};
    const double level = rng.uniform() < 0.5 ? rng.uniform(0.05, 0.25) : rng.uniform(0.7, 0.95);
    for (std::size_t r = box.r0; r < std::min(size, box.r0 + box.h); ++r) {
      for (std::size_t c = box.c0; c < std::min(size, box.c0 + box.w); ++c) p.vis(r, c) = level;
    }
    boxes.push_back(box);
  }

  // Infrared: dim vertical gradient plus warm Gaussian blobs; the first
  // blob sits on a rectangle so the modalities share some structure.
  const double base = rng.uniform(0.1, 0.25);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) p.ir(r, c) = base + 0.1 * static_cast<double>(r) / n;
  }
  const std::size_t blob_count = 1 + rng.index(3);
  for (std::size_t b = 0; b < blob_count; ++b) {
    double cr = rng.uniform(0.2, 0.8) * n;
    double cc = rng.uniform(0.2, 0.8) * n;
    if (b == 0) {
      cr = static_cast<double>(boxes[0].r0) + 0.5 * static_cast<double>(boxes[0].h);
      cc = static_cast<double>(boxes[0].c0) + 0.5 * static_cast<double>(boxes[0].w);
    }
    const double radius = rng.uniform(0.06, 0.15) * n;
    const double heat = rng.uniform(0.5, 0.75);
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double d2 = std::pow(static_cast<double>(r) - cr, 2) + std::pow(static_cast<double>(c) - cc, 2);
        p.ir(r, c) += heat * std::exp(-d2 / (2.0 * radius * radius));
      }
    }
  }
  for (double& v : p.ir.values()) v += 0.01 * rng.normal();
  for (double& v : p.vis.values()) v += 0.01 * rng.normal();

  // Quantise so in-memory pairs equal what a PGM round trip yields.
  for (auto* img : {&p.ir, &p.vis}) {
    for (double& v : img->values()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  }
  return p;
}

void write_toy_dataset(const std::filesystem::path& root, std::size_t count, std::size_t size, std::uint64_t seed) {
  std::filesystem::create_directories(root / "ir");
  std::filesystem::create_directories(root / "vis");
  for (std::size_t i = 0; i < count; ++i) {
    const auto p = synth_pair(size, seed, i);
    save_image(p.ir, root / "ir" / p.name);
    save_image(p.vis, root / "vis" / p.name);
  }
}

}  // namespace physfuse
