// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "physfuse/error.hpp"

namespace physfuse {

std::string to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ",")); }

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw ShapeError(fmt::format("Tensor: {} values for shape {}", data_.size(), to_string(shape_)));
  }
}

Tensor Tensor::from_image(const ImageTensor& img) {
  auto v = img.values();
  return Tensor({img.channels(), img.height(), img.width()}, std::vector<double>(v.begin(), v.end()));
}

ImageTensor Tensor::to_image() const {
  if (rank() != 3) throw ShapeError(fmt::format("to_image: rank-3 tensor expected, got {}", to_string(shape_)));
  return ImageTensor(shape_[1], shape_[2], shape_[0], data_);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError(fmt::format("item() on tensor of shape {}", to_string(shape_)));
  return data_.front();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace physfuse
