// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedproj {

enum class ErrorCode {
  kInvalidDimension,
  kShape,
  kProtocol,
  kNumeric,
  kDiverged,
  kInfeasibleBudget,
  kPartition,
  kConfig,
  kIo,
};

const char* error_code_name(ErrorCode code);

// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Same code, message prefixed with `context` (e.g. "round 3").
  Error with_context(const std::string& context) const {
    return Error(code_, context + ": " + what(), Verbatim{});
  }

 private:
  struct Verbatim {};
  Error(ErrorCode code, const std::string& full, Verbatim)
      : std::runtime_error(full), code_(code) {}

  ErrorCode code_;
};

// Raised when a loss or gradient becomes non-finite during local training.
class DivergedError : public Error {
 public:
  DivergedError(std::size_t iteration, const std::string& what)
      : Error(ErrorCode::kDiverged,
              what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

// Raised when a loss evaluation returns NaN/Inf. index identifies the
// perturbation (or example) that produced it.
class NumericError : public Error {
 public:
  NumericError(std::size_t index, const std::string& what)
      : Error(ErrorCode::kNumeric,
              what + " (index " + std::to_string(index) + ")"),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace fedproj
