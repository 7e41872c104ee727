// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/error.hpp"

namespace physfuse {

int exit_code_for(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::kUsage:
      return 1;
    case ErrorCategory::kData:
      return 2;
    case ErrorCategory::kNumeric:
      return 3;
  }
  return 3;
}

}  // namespace physfuse
