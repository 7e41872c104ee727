// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace physfuse {

/// Coarse failure category; the CLI maps it onto its exit code.
enum class ErrorCategory {
  kUsage,    // bad flags or configuration
  kData,     // unreadable or inconsistent inputs
  kNumeric,  // invalid parameters, domain violations, contract breaches
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define PHYSFUSE_DEFINE_ERROR(Name, Category)                          \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(Category, what) {} \
  }

PHYSFUSE_DEFINE_ERROR(IoError, ErrorCategory::kData);
PHYSFUSE_DEFINE_ERROR(FormatError, ErrorCategory::kData);
PHYSFUSE_DEFINE_ERROR(DatasetError, ErrorCategory::kData);
PHYSFUSE_DEFINE_ERROR(PairError, ErrorCategory::kData);
PHYSFUSE_DEFINE_ERROR(CheckpointError, ErrorCategory::kData);
PHYSFUSE_DEFINE_ERROR(ConfigError, ErrorCategory::kUsage);
PHYSFUSE_DEFINE_ERROR(RangeError, ErrorCategory::kNumeric);
PHYSFUSE_DEFINE_ERROR(ShapeError, ErrorCategory::kNumeric);
PHYSFUSE_DEFINE_ERROR(ContractError, ErrorCategory::kNumeric);
PHYSFUSE_DEFINE_ERROR(ParamError, ErrorCategory::kNumeric);

#undef PHYSFUSE_DEFINE_ERROR

/// Raised when a quantity leaves the domain where its formula is defined.
/// `index` identifies the offending element (e.g. a latent channel), or
/// npos when the failure is not tied to one element.
class DomainError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit DomainError(const std::string& what, std::size_t index = npos)
      : Error(ErrorCategory::kNumeric, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Process exit code for a failure category: 1 usage, 2 data, 3 numeric.
int exit_code_for(ErrorCategory category) noexcept;

}  // namespace physfuse
