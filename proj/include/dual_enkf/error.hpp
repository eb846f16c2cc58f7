/*
 Copyright 2026 The dual-enkf Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dual_enkf {

enum class ErrorCode {
  DimensionMismatch,
  NotPositiveDefinite,
  NotControllable,
  NotObservable,
  InvalidGrid,
  StepSizeTooLarge,
  NoConvergence,
  CholeskyFailure,
  TooFewParticles,
  NonFiniteState,
  OracleFailure,
  Diverged,
  OddDimension,
  GridMismatch,
  ParseError,
  ValidationError,
  IOError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NotControllable: return "NotControllable";
    case ErrorCode::NotObservable: return "NotObservable";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::StepSizeTooLarge: return "StepSizeTooLarge";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::CholeskyFailure: return "CholeskyFailure";
    case ErrorCode::TooFewParticles: return "TooFewParticles";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::OracleFailure: return "OracleFailure";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IOError: return "IOError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// message holds the human-readable detail (e.g. which field failed).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace dual_enkf
