// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Central-difference gradient checking shared by the unit tests and the
// acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "physfuse/autodiff.hpp"
#include "physfuse/param_store.hpp"
#include "physfuse/rng.hpp"

namespace physfuse::testing {

using Builder = std::function<ad::Var(ad::Tape&, ParamStore&)>;

inline Tensor random_tensor(Shape shape, Rng& rng, double keep_away_from_zero = 0.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    v = rng.normal();
    if (std::abs(v) < keep_away_from_zero) v = v < 0 ? -keep_away_from_zero : keep_away_from_zero;
  }
  return t;
}

inline double loss_value(ParamStore& store, const Builder& build) {
  ad::Tape tape;
  return build(tape, store).value().item();
}

// Worst relative error between backward() and central differences over
// every element of every entry in `store`.
inline double worst_gradient_error(ParamStore& store, const Builder& build, double h = 1e-4) {
  store.zero_grads();
  {
    ad::Tape tape;
    tape.backward(build(tape, store));
  }
  double worst = 0.0;
  for (auto& [name, entry] : store) {
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double orig = entry.value[i];
      entry.value[i] = orig + h;
      const double up = loss_value(store, build);
      entry.value[i] = orig - h;
      const double down = loss_value(store, build);
      entry.value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = entry.grad[i];
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      const double err = scale > 1e-6 ? std::abs(numeric - analytic) / scale : std::abs(numeric - analytic) * 1e2;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// mean(out * R) with a fixed random R, so every output element matters.
inline ad::Var probe(ad::Tape& tape, ad::Var out, std::uint64_t seed) {
  Rng rng(seed);
  return ad::mean(ad::mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

struct GradCase {
  const char* name;
  Builder build;
};

/// Inputs x, y [2,4,6], conv weight w [3,2,3,3], bias b [3], mask m [2],
/// with entries kept away from the clamp kinks at +-0.75.
inline ParamStore primitive_inputs(std::uint64_t seed) {
  Rng rng(seed);
  ParamStore base;
  base.add("x", random_tensor({2, 4, 6}, rng, 1e-2));
  base.add("y", random_tensor({2, 4, 6}, rng, 1e-2));
  base.add("w", random_tensor({3, 2, 3, 3}, rng));
  base.add("b", random_tensor({3}, rng));
  base.add("m", random_tensor({2}, rng));
  ParamStore store;
  for (const auto& [name, e] : base) {
    Tensor v = e.value;
    for (double& x : v.values()) {
      if (std::abs(std::abs(x) - 0.75) < 1e-2) x *= 1.1;
    }
    store.add(name, v);
  }
  return store;
}

/// One probe loss per differentiable primitive.
inline std::vector<GradCase> primitive_cases() {
  return {
        {"conv2d", [](ad::Tape& t, ParamStore& s) {
           return probe(t, ad::conv2d(t.parameter(s, "x"), t.parameter(s, "w"), t.parameter(s, "b")), 10);
         }},
        {"downsample2", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::downsample2(t.parameter(s, "x")), 11); }},
        {"upsample2", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::upsample2(t.parameter(s, "x")), 12); }},
        {"leaky_relu", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::leaky_relu(t.parameter(s, "x")), 13); }},
        {"sigmoid", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::sigmoid(t.parameter(s, "x")), 14); }},
        {"exp", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::exp(t.parameter(s, "x")), 15); }},
        {"add", [](ad::Tape& t, ParamStore& s) { return probe(t, t.parameter(s, "x") + t.parameter(s, "y"), 16); }},
        {"sub", [](ad::Tape& t, ParamStore& s) { return probe(t, t.parameter(s, "x") - t.parameter(s, "y"), 17); }},
        {"mul", [](ad::Tape& t, ParamStore& s) { return probe(t, t.parameter(s, "x") * t.parameter(s, "y"), 18); }},
        {"scale", [](ad::Tape& t, ParamStore& s) { return probe(t, 1.7 * t.parameter(s, "x"), 19); }},
        {"add_scalar", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::add_scalar(t.parameter(s, "x"), 0.3), 20); }},
        {"clamp", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::clamp(t.parameter(s, "x"), -0.75, 0.75), 21); }},
        {"concat", [](ad::Tape& t, ParamStore& s) { return probe(t, ad::concat(t.parameter(s, "x"), t.parameter(s, "y")), 22); }},
        {"channel_scale", [](ad::Tape& t, ParamStore& s) {
           return probe(t, ad::channel_scale(t.parameter(s, "x"), t.parameter(s, "m")), 23);
         }},
        {"mean", [](ad::Tape& t, ParamStore& s) { return ad::mean(ad::mul(t.parameter(s, "x"), t.parameter(s, "x"))); }},
        {"mse_loss", [](ad::Tape& t, ParamStore& s) { return ad::mse_loss(t.parameter(s, "x"), t.parameter(s, "y")); }},
    };
}

}  // namespace physfuse::testing
