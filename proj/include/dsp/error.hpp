#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsp {

enum class ErrorCode {
  ParseError,
  SchemaVersionMismatch,
  InvalidScenario,
  NoTarget,
  DegenerateHeading,
  InfeasibleSpec,
  EmptyGraph,
  EmptyMap,
  ShapeMismatch,
  NonFiniteValue,
  MissingGrad,
  MissingGTFuture,
  ChecksumMismatch,
  InvalidConfig,
  IoError,
};

inline std::string_view error_code_name(ErrorCode code);

/// Single exception type for the library; `code()` distinguishes the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::NoTarget: return "NoTarget";
    case ErrorCode::DegenerateHeading: return "DegenerateHeading";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::EmptyMap: return "EmptyMap";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingGrad: return "MissingGrad";
    case ErrorCode::MissingGTFuture: return "MissingGTFuture";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace dsp
