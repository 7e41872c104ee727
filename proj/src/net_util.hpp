// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "physfuse/autodiff.hpp"
#include "physfuse/param_store.hpp"

namespace physfuse::detail {

/// Resolves parameter names to tape leaves. With a mutable store the leaves
/// are trainable; otherwise they are constants copied from `view`. Each
/// name is bound once per tape.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, ParamStore& store) : tape_(tape), store_(&store), view_(store) {}
  ParamBinder(ad::Tape& tape, const ParamStore& view) : tape_(tape), view_(view) {}

  ad::Var operator()(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    const ad::Var v = store_ != nullptr ? tape_.parameter(*store_, name) : tape_.constant(view_.value(name));
    bound_.emplace(name, v);
    return v;
  }

  ad::Var conv(const std::string& prefix, ad::Var x) {
    return ad::conv2d(x, (*this)(prefix + ".w"), (*this)(prefix + ".b"));
  }

  ad::Tape& tape() { return tape_; }

 private:
  ad::Tape& tape_;
  ParamStore* store_ = nullptr;
  const ParamStore& view_;
  std::map<std::string, ad::Var> bound_;
};

}  // namespace physfuse::detail
