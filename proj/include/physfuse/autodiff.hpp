// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "physfuse/param_store.hpp"
#include "physfuse/tensor.hpp"

namespace physfuse::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid as long as
/// the tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Local backward rule of a primitive: given the output value and the
/// gradient flowing into it, accumulate into the gradients of the inputs.
/// Entries of `in_grads` are null for inputs that need no gradient.
using BackwardFn = std::function<void(const Tensor& out_value, const Tensor& out_grad,
                                      std::span<const Tensor* const> in_values,
                                      std::span<Tensor* const> in_grads)>;

/// Linear record of primitive applications. Nodes are appended in
/// evaluation order, so inputs always precede their consumers and a single
/// reverse sweep visits every node once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);

  /// Leaf bound to a store entry; backward() adds its gradient into the
  /// entry's grad buffer.
  Var parameter(ParamStore& store, const std::string& name);

  /// Appends a primitive's output. Used by the primitives below.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Parameter gradients are accumulated
  /// (not overwritten), so summing several backward() calls equals the
  /// backward of the summed losses. Throws ContractError for a non-scalar
  /// loss.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t index) const { return nodes_.at(index).value; }

  /// Gradient of the last backward() loss with respect to node `v`.
  /// Zero-filled for nodes the loss does not depend on.
  Tensor grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    ParamStore::Entry* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. All inputs must live on the same tape; mismatched shapes raise
// ShapeError.

/// 3x3 convolution, stride 1, replicate padding.
/// x: (Cin, H, W), w: (Cout, Cin, 3, 3), b: (Cout) -> (Cout, H, W).
Var conv2d(Var x, Var w, Var b);

/// 2x2 mean pooling; H and W must be even.
Var downsample2(Var x);

/// Nearest-neighbour x2 upsampling.
Var upsample2(Var x);

Var leaky_relu(Var x, double slope = 0.1);
Var sigmoid(Var x);
Var exp(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

/// Values outside [lo, hi] are clamped and pass no gradient.
Var clamp(Var x, double lo, double hi);

/// Concatenation of two (C, H, W) tensors along the channel axis.
Var concat(Var a, Var b);

/// x: (C, H, W) times a per-channel factor m: (C).
Var channel_scale(Var x, Var m);

/// Mean of all elements, as a scalar.
Var mean(Var x);

/// mean((a - b)^2), as a scalar.
Var mse_loss(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace physfuse::ad
