// Copyright 2026 The setloc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace setloc {

enum class ErrorCode {
  invalid_argument,
  io,
  parse,
  shape_mismatch,
  numeric,
  no_landmarks,
  version_mismatch,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::no_landmarks: return "no_landmarks";
    case ErrorCode::version_mismatch: return "version_mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace setloc
