#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dustflow {

enum class ErrorCode {
  InvalidSpec,
  NoDust,
  DegenerateTotalMerge,
  EmptyMeasure,
  OutOfRange,
  Diverges,
  DivergentIntegral,
  CapExceeded,
  ZeroActivity,
  BudgetUnreachable,
  TimeRegression,
  JumpCapExceeded,
  ShapeMismatch,
  Absorbed,
  ConditionUnmet,
  InsufficientSignal,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NoDust: return "NoDust";
    case ErrorCode::DegenerateTotalMerge: return "DegenerateTotalMerge";
    case ErrorCode::EmptyMeasure: return "EmptyMeasure";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::Diverges: return "Diverges";
    case ErrorCode::DivergentIntegral: return "DivergentIntegral";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::ZeroActivity: return "ZeroActivity";
    case ErrorCode::BudgetUnreachable: return "BudgetUnreachable";
    case ErrorCode::TimeRegression: return "TimeRegression";
    case ErrorCode::JumpCapExceeded: return "JumpCapExceeded";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Absorbed: return "Absorbed";
    case ErrorCode::ConditionUnmet: return "ConditionUnmet";
    case ErrorCode::InsufficientSignal: return "InsufficientSignal";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace dustflow
