// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "physfuse/error.hpp"

namespace physfuse {
namespace {

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(fmt::format("{}: shape {}x{}x{} vs {}x{}x{}", op, a.channels(),
                                 a.height(), a.width(), b.channels(), b.height(),
                                 b.width()));
  }
}

template <typename F>
ImageTensor zip(const ImageTensor& a, const ImageTensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  ImageTensor out(a.height(), a.width(), a.channels());
  auto va = a.values();
  auto vb = b.values();
  auto vo = out.values();
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = f(va[i], vb[i]);
  return out;
}

}  // namespace

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                         double fill)
    : height_(height),
      width_(width),
      channels_(channels),
      data_(height * width * channels, fill) {}

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != height * width * channels) {
    throw ShapeError(fmt::format("ImageTensor: {} values for a {}x{}x{} tensor",
                                 data_.size(), channels, height, width));
  }
}

double ImageTensor::clamped(std::size_t c, std::ptrdiff_t row, std::ptrdiff_t col) const {
  const auto r = std::clamp<std::ptrdiff_t>(row, 0, static_cast<std::ptrdiff_t>(height_) - 1);
  const auto x = std::clamp<std::ptrdiff_t>(col, 0, static_cast<std::ptrdiff_t>(width_) - 1);
  return at(c, static_cast<std::size_t>(r), static_cast<std::size_t>(x));
}

std::span<double> ImageTensor::plane(std::size_t c) {
  return std::span<double>(data_).subspan(c * plane_size(), plane_size());
}

std::span<const double> ImageTensor::plane(std::size_t c) const {
  return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
}

ImageTensor ImageTensor::channel(std::size_t c) const {
  auto p = plane(c);
  return ImageTensor(height_, width_, 1, std::vector<double>(p.begin(), p.end()));
}

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

ImageTensor operator*(const ImageTensor& a, const ImageTensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

ImageTensor operator*(double s, const ImageTensor& a) {
  ImageTensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

ImageTensor operator+(const ImageTensor& a, double s) {
  ImageTensor out = a;
  for (double& v : out.values()) v += s;
  return out;
}

ImageTensor elementwise_max(const ImageTensor& a, const ImageTensor& b) {
  return zip(a, b, "max", [](double x, double y) { return std::max(x, y); });
}

ImageTensor clamp(const ImageTensor& img, double lo, double hi) {
  ImageTensor out = img;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

double min_value(const ImageTensor& img) {
  auto v = img.values();
  return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
}

double max_value(const ImageTensor& img) {
  auto v = img.values();
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

double mean_value(const ImageTensor& img) {
  auto v = img.values();
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool all_finite(const ImageTensor& img) {
  auto v = img.values();
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

ImageTensor stack_channels(std::span<const ImageTensor> planes) {
  if (planes.empty()) return {};
  const auto h = planes.front().height();
  const auto w = planes.front().width();
  std::vector<double> data;
  data.reserve(h * w * planes.size());
  for (const auto& p : planes) {
    if (p.height() != h || p.width() != w || p.channels() != 1) {
      throw ShapeError("stack_channels: planes must be single-channel and equal-sized");
    }
    auto v = p.values();
    data.insert(data.end(), v.begin(), v.end());
  }
  return ImageTensor(h, w, planes.size(), std::move(data));
}

ImageTensor downsample_area(const ImageTensor& img, std::size_t factor) {
  if (factor == 0 || img.height() % factor != 0 || img.width() % factor != 0) {
    throw ShapeError(fmt::format("downsample_area: {}x{} not divisible by {}",
                                 img.height(), img.width(), factor));
  }
  if (factor == 1) return img;
  const auto h = img.height() / factor;
  const auto w = img.width() / factor;
  ImageTensor out(h, w, img.channels());
  const double norm = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t dr = 0; dr < factor; ++dr) {
          for (std::size_t dx = 0; dx < factor; ++dx) {
            acc += img.at(c, r * factor + dr, x * factor + dx);
          }
        }
        out.at(c, r, x) = acc * norm;
      }
    }
  }
  return out;
}

ImageTensor upsample_nearest(const ImageTensor& img, std::size_t factor) {
  ImageTensor out(img.height() * factor, img.width() * factor, img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < out.height(); ++r) {
      for (std::size_t x = 0; x < out.width(); ++x) {
        out.at(c, r, x) = img.at(c, r / factor, x / factor);
      }
    }
  }
  return out;
}

ImageTensor pad_to_multiple(const ImageTensor& img, std::size_t multiple) {
  const auto round_up = [multiple](std::size_t n) {
    return (n + multiple - 1) / multiple * multiple;
  };
  const auto h = round_up(img.height());
  const auto w = round_up(img.width());
  if (h == img.height() && w == img.width()) return img;
  ImageTensor out(h, w, img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t x = 0; x < w; ++x) {
        out.at(c, r, x) = img.clamped(c, static_cast<std::ptrdiff_t>(r),
                                      static_cast<std::ptrdiff_t>(x));
      }
    }
  }
  return out;
}

ImageTensor crop(const ImageTensor& img, std::size_t height, std::size_t width) {
  if (height > img.height() || width > img.width()) {
    throw ShapeError("crop: target larger than source");
  }
  ImageTensor out(height, width, img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t x = 0; x < width; ++x) out.at(c, r, x) = img.at(c, r, x);
    }
  }
  return out;
}

ImageTensor luminance(const ImageTensor& rgb) {
  if (rgb.channels() != 3) throw ShapeError("luminance: expected 3 channels");
  ImageTensor out(rgb.height(), rgb.width(), 1);
  auto r = rgb.plane(0);
  auto g = rgb.plane(1);
  auto b = rgb.plane(2);
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  return out;
}

}  // namespace physfuse
