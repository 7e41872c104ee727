// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "physfuse/rng.hpp"
#include "physfuse/tensor.hpp"

namespace physfuse {

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable tensors, each with its gradient buffer and Adam moments.
/// Entries are kept in name order, which fixes iteration and serialization
/// order. Not thread-safe; one training loop owns a store.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
  };

  /// Inserts a parameter with zeroed grad and moments. Re-adding an
  /// existing name is a ContractError.
  Entry& add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& value(const std::string& name) { return at(name).value; }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t step_count() const noexcept { return step_count_; }
  std::size_t parameter_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grads();

  /// One bias-corrected Adam update of every entry; increments step_count.
  void adam_step(const AdamConfig& cfg);

  /// Values-only equality (grads and optimizer state ignored).
  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, Entry> entries_;
  std::size_t step_count_ = 0;
};

/// Adds `<prefix>.w` with shape (cout, cin, 3, 3) and `<prefix>.b` with
/// shape (cout), both uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] with
/// fan_in = 9 * cin.
void add_conv3x3(ParamStore& store, const std::string& prefix, std::size_t cin,
                 std::size_t cout, Rng& rng);

}  // namespace physfuse
