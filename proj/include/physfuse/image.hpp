// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace physfuse {

/// Dense 2-D field with one or more channels, stored channel-major then
/// row-major: index = (c * height + row) * width + col.
///
/// The same carrier holds images (values in [0,1]), latent tensors, masks
/// and gradient maps; only image-valued tensors are range-restricted, and
/// that restriction is checked where images enter or leave the program.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels = 1,
              double fill = 0.0);
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
              std::vector<double> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(std::size_t c, std::size_t row, std::size_t col) {
    return data_[(c * height_ + row) * width_ + col];
  }
  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return data_[(c * height_ + row) * width_ + col];
  }
  /// Channel-0 accessors for the common single-channel case.
  double& operator()(std::size_t row, std::size_t col) { return at(0, row, col); }
  double operator()(std::size_t row, std::size_t col) const { return at(0, row, col); }

  /// Value at (row, col) with coordinates clamped into the grid, i.e. the
  /// replicate-padding read used by every stencil.
  double clamped(std::size_t c, std::ptrdiff_t row, std::ptrdiff_t col) const;

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> plane(std::size_t c);
  std::span<const double> plane(std::size_t c) const;

  /// Copy of channel c as a single-channel tensor.
  ImageTensor channel(std::size_t c) const;

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

// Element-wise arithmetic; operands must share a shape (ShapeError).
ImageTensor operator+(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator-(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator*(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator*(double s, const ImageTensor& a);
ImageTensor operator+(const ImageTensor& a, double s);

ImageTensor elementwise_max(const ImageTensor& a, const ImageTensor& b);
ImageTensor clamp(const ImageTensor& img, double lo, double hi);

double min_value(const ImageTensor& img);
double max_value(const ImageTensor& img);
double mean_value(const ImageTensor& img);
bool all_finite(const ImageTensor& img);

/// Stack single-channel tensors of equal size into one multi-channel tensor.
ImageTensor stack_channels(std::span<const ImageTensor> planes);

/// Area (box) downsampling by an integer factor; both dimensions must be
/// divisible by it.
ImageTensor downsample_area(const ImageTensor& img, std::size_t factor);

/// Nearest-neighbour upsampling by an integer factor.
ImageTensor upsample_nearest(const ImageTensor& img, std::size_t factor);

/// Replicate-pads the bottom and right edges so both dimensions become
/// multiples of `multiple`.
ImageTensor pad_to_multiple(const ImageTensor& img, std::size_t multiple);

/// Top-left crop.
ImageTensor crop(const ImageTensor& img, std::size_t height, std::size_t width);

/// Y' = 0.299 R + 0.587 G + 0.114 B of a 3-channel tensor.
ImageTensor luminance(const ImageTensor& rgb);

}  // namespace physfuse
