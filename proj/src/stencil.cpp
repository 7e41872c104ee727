// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/stencil.hpp"

#include <cmath>
#include <cstddef>

#include "physfuse/error.hpp"

namespace physfuse {

StencilKernel StencilKernel::make(StencilName name) {
  switch (name) {
    case StencilName::kSobelX:
      return {name, {{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}}};
    case StencilName::kSobelY:
      return {name, {{{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}}}};
    case StencilName::kLaplacian5pt:
      return {name, {{{0, 1, 0}, {1, -4, 1}, {0, 1, 0}}}};
    case StencilName::kGaussian3x3:
      return {name,
              {{{1.0 / 16, 2.0 / 16, 1.0 / 16},
                {2.0 / 16, 4.0 / 16, 2.0 / 16},
                {1.0 / 16, 2.0 / 16, 1.0 / 16}}}};
  }
  throw ParamError("unknown stencil");
}

double StencilKernel::sum() const {
  double s = 0.0;
  for (const auto& row : taps) {
    for (double t : row) s += t;
  }
  return s;
}

std::string_view to_string(StencilName name) {
  switch (name) {
    case StencilName::kSobelX:
      return "sobel_x";
    case StencilName::kSobelY:
      return "sobel_y";
    case StencilName::kLaplacian5pt:
      return "laplacian_5pt";
    case StencilName::kGaussian3x3:
      return "gaussian_3x3";
  }
  return "unknown";
}

ImageTensor convolve(const ImageTensor& img, const StencilKernel& kernel) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < img.height(); ++r) {
      for (std::size_t x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dx = -1; dx <= 1; ++dx) {
            const double tap = kernel.taps[dr + 1][dx + 1];
            if (tap == 0.0) continue;
            acc += tap * img.clamped(c, static_cast<std::ptrdiff_t>(r) + dr,
                                     static_cast<std::ptrdiff_t>(x) + dx);
          }
        }
        out.at(c, r, x) = acc;
      }
    }
  }
  return out;
}

ImageTensor convolve(const ImageTensor& img, StencilName name) {
  return convolve(img, StencilKernel::make(name));
}

ImageTensor gradient_magnitude(const ImageTensor& img) {
  // Sobel responses written as paired differences, so flat regions give an
  // exact zero instead of a rounding residue.
  ImageTensor out(img.height(), img.width(), img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < img.height(); ++r) {
      for (std::size_t x = 0; x < img.width(); ++x) {
        const auto f = [&](int dr, int dx) {
          return img.clamped(c, static_cast<std::ptrdiff_t>(r) + dr, static_cast<std::ptrdiff_t>(x) + dx);
        };
        const double gx = (f(-1, 1) - f(-1, -1)) + 2.0 * (f(0, 1) - f(0, -1)) + (f(1, 1) - f(1, -1));
        const double gy = (f(1, -1) - f(-1, -1)) + 2.0 * (f(1, 0) - f(-1, 0)) + (f(1, 1) - f(-1, 1));
        out.at(c, r, x) = std::hypot(gx, gy);
      }
    }
  }
  return out;
}

ImageTensor gaussian_curvature(const ImageTensor& img, double spacing) {
  if (img.channels() != 1 || img.height() < 3 || img.width() < 3) {
    throw ShapeError("gaussian_curvature: needs a single-channel image of at least 3x3");
  }
  if (!(spacing > 0.0)) throw ParamError("gaussian_curvature: spacing must be positive");
  const double h = spacing;
  ImageTensor out(img.height(), img.width(), 1);
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const auto f = [&](int dr, int dx) {
        return img.clamped(0, static_cast<std::ptrdiff_t>(r) + dr,
                           static_cast<std::ptrdiff_t>(x) + dx);
      };
      const double fx = (f(0, 1) - f(0, -1)) / (2.0 * h);
      const double fy = (f(1, 0) - f(-1, 0)) / (2.0 * h);
      const double fxx = (f(0, 1) - 2.0 * f(0, 0) + f(0, -1)) / (h * h);
      const double fyy = (f(1, 0) - 2.0 * f(0, 0) + f(-1, 0)) / (h * h);
      const double fxy = (f(1, 1) - f(-1, 1) - f(1, -1) + f(-1, -1)) / (4.0 * h * h);
      const double g = 1.0 + fx * fx + fy * fy;
      out(r, x) = (fxx * fyy - fxy * fxy) / (g * g);
    }
  }
  return out;
}

double dirichlet_energy(const ImageTensor& img) {
  double e = 0.0;
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < img.height(); ++r) {
      for (std::size_t x = 0; x < img.width(); ++x) {
        if (x + 1 < img.width()) {
          const double d = img.at(c, r, x + 1) - img.at(c, r, x);
          e += d * d;
        }
        if (r + 1 < img.height()) {
          const double d = img.at(c, r + 1, x) - img.at(c, r, x);
          e += d * d;
        }
      }
    }
  }
  return e;
}

double total_variation(const ImageTensor& img) {
  double tv = 0.0;
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < img.height(); ++r) {
      for (std::size_t x = 0; x < img.width(); ++x) {
        if (x + 1 < img.width()) tv += std::abs(img.at(c, r, x + 1) - img.at(c, r, x));
        if (r + 1 < img.height()) tv += std::abs(img.at(c, r + 1, x) - img.at(c, r, x));
      }
    }
  }
  return tv;
}

}  // namespace physfuse
