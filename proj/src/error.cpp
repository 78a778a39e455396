// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/error.hpp"

namespace fedproj {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidDimension: return "invalid-dimension";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kInfeasibleBudget: return "infeasible-budget";
    case ErrorCode::kPartition: return "partition";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace fedproj
