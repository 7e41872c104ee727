// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/param_store.hpp"

#include <cmath>

#include <fmt/format.h>

#include "physfuse/error.hpp"

namespace physfuse {

ParamStore::Entry& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ContractError(fmt::format("parameter '{}' already exists", name));
  const Shape shape = value.shape();
  Entry e{std::move(value), Tensor(shape), Tensor(shape), Tensor(shape)};
  return entries_.emplace(name, std::move(e)).first->second;
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

void ParamStore::adam_step(const AdamConfig& cfg) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : entries_) {
    auto p = e.value.values();
    auto g = e.grad.values();
    auto m = e.adam_m.values();
    auto v = e.adam_v.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  }
  return true;
}

void add_conv3x3(ParamStore& store, const std::string& prefix, std::size_t cin,
                 std::size_t cout, Rng& rng) {
  const double bound = 1.0 / std::sqrt(9.0 * static_cast<double>(cin));
  Tensor w({cout, cin, 3, 3});
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  Tensor b({cout});
  for (double& v : b.values()) v = rng.uniform(-bound, bound);
  store.add(prefix + ".w", std::move(w));
  store.add(prefix + ".b", std::move(b));
}

}  // namespace physfuse
