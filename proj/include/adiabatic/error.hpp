#ifndef ADIABATIC_ERROR_HPP
#define ADIABATIC_ERROR_HPP

#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace adiabatic {

enum class ErrorCode {
  NotHermitian,
  DegeneracyCountMismatch,
  FrameContinuityLoss,
  DimensionMismatch,
  InvalidState,
  AdiabaticityLost,
  PivotTooSmall,
  PopulationOverflow,
  BoundaryDegenerate,
  NotAFixedPoint,
  ZeroModeCountMismatch,
  DefectiveMatrix,
  StepTooLarge,
  SingularNZBlock,
  GapClosure,
  PoorFit,
  ParseError,
  ValidationError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::DegeneracyCountMismatch: return "DegeneracyCountMismatch";
    case ErrorCode::FrameContinuityLoss: return "FrameContinuityLoss";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::AdiabaticityLost: return "AdiabaticityLost";
    case ErrorCode::PivotTooSmall: return "PivotTooSmall";
    case ErrorCode::PopulationOverflow: return "PopulationOverflow";
    case ErrorCode::BoundaryDegenerate: return "BoundaryDegenerate";
    case ErrorCode::NotAFixedPoint: return "NotAFixedPoint";
    case ErrorCode::ZeroModeCountMismatch: return "ZeroModeCountMismatch";
    case ErrorCode::DefectiveMatrix: return "DefectiveMatrix";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::SingularNZBlock: return "SingularNZBlock";
    case ErrorCode::GapClosure: return "GapClosure";
    case ErrorCode::PoorFit: return "PoorFit";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Configuration problems (parse/validation) versus numerical failures.
/// Short human-readable number for messages; keeps tiny values visible.
template <class T>
std::string num_text(T v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

constexpr bool is_config_error(ErrorCode code) {
  return code == ErrorCode::ParseError || code == ErrorCode::ValidationError;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace adiabatic

#endif
