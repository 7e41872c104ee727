// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string_view>

#include "physfuse/image.hpp"

namespace physfuse {

enum class StencilName { kSobelX, kSobelY, kLaplacian5pt, kGaussian3x3 };

/// Fixed 3x3 coefficient grid, taps[row][col] with the centre at [1][1].
struct StencilKernel {
  StencilName name;
  std::array<std::array<double, 3>, 3> taps;

  static StencilKernel make(StencilName name);
  double sum() const;
};

std::string_view to_string(StencilName name);

/// 3x3 correlation applied to every channel independently, replicate
/// padding at the borders. Output has the input's shape.
ImageTensor convolve(const ImageTensor& img, const StencilKernel& kernel);
ImageTensor convolve(const ImageTensor& img, StencilName name);

/// sqrt(Gx^2 + Gy^2) with (unnormalised) Sobel responses, per channel.
ImageTensor gradient_magnitude(const ImageTensor& img);

/// Gaussian curvature of the graph surface z = f(x, y):
///   K = (f_xx f_yy - f_xy^2) / (1 + f_x^2 + f_y^2)^2
/// with second-order central differences on a grid of the given spacing
/// (x along columns, y along rows) and replicate borders. Single channel,
/// at least 3x3.
ImageTensor gaussian_curvature(const ImageTensor& img, double spacing = 1.0);

/// Dirichlet energy sum |grad f|^2 using forward differences inside the
/// grid (no boundary flux). Used to check that heat steps dissipate.
double dirichlet_energy(const ImageTensor& img);

/// Anisotropic total variation, sum of absolute forward differences.
double total_variation(const ImageTensor& img);

}  // namespace physfuse
