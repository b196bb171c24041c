#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lagflow {

enum class ErrorCode {
  EmptyInput,
  DuplicateSites,
  DegenerateCell,
  NotPeriodic,
  NotRectangular,
  InvalidArgument,
  NewtonStalled,
  MaxIterationsExceeded,
  DegenerateProblem,
  SingularSystem,
  PositionCollision,
  ConfigInvalid,
  IoFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateSites: return "DuplicateSites";
    case ErrorCode::DegenerateCell: return "DegenerateCell";
    case ErrorCode::NotPeriodic: return "NotPeriodic";
    case ErrorCode::NotRectangular: return "NotRectangular";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NewtonStalled: return "NewtonStalled";
    case ErrorCode::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorCode::DegenerateProblem: return "DegenerateProblem";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::PositionCollision: return "PositionCollision";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

/// Exception type thrown by every lagflow operation.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lagflow
