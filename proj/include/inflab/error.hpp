#pragma once

#include <stdexcept>
#include <string>

namespace inflab {

enum class ErrorCode {
  NotPositiveDefinite,
  NoConvergence,
  NegativeQuadraticForm,
  DimensionMismatch,
  DomainMismatch,
  EmptyDataset,
  MaxIterations,
  Diverged,
  AllZeroWeights,
  BreakdownZeroCurvature,
  DivergedNonFinite,
  NonpositiveRitzValue,
  UnsupportedDecay,
  UnsupportedMethod,
  EmptyInput,
  InvalidArgument,
  ParseError,
  SchemaMismatch,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorCode code) noexcept;

// Configuration and input problems map to CLI exit code 2, everything else
// (numerical failures) to exit code 3.
inline bool is_input_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::ConfigError:
    case ErrorCode::IoError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnsupportedMethod:
    case ErrorCode::UnsupportedDecay:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NegativeQuadraticForm: return "NegativeQuadraticForm";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::BreakdownZeroCurvature: return "BreakdownZeroCurvature";
    case ErrorCode::DivergedNonFinite: return "DivergedNonFinite";
    case ErrorCode::NonpositiveRitzValue: return "NonpositiveRitzValue";
    case ErrorCode::UnsupportedDecay: return "UnsupportedDecay";
    case ErrorCode::UnsupportedMethod: return "UnsupportedMethod";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace inflab
