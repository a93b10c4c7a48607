#pragma once

#include <stdexcept>
#include <string>

namespace casdet {

enum class ErrorCode {
  kInvalidAudio,
  kInvalidConfig,
  kCorruptFile,
  kInvalidLabel,
  kShapeError,
  kEmptySubset,
  kNumericalError,
  kMissingModel,
  kInvalidInput,
  kDegenerateLabels,
};

// Single exception type for the whole pipeline; the CLI maps codes to
// process exit codes (config -> 1, data -> 2, numerical -> 3).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidAudio: return "InvalidAudio";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kInvalidLabel: return "InvalidLabel";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kEmptySubset: return "EmptySubset";
    case ErrorCode::kNumericalError: return "NumericalError";
    case ErrorCode::kMissingModel: return "MissingModel";
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
  }
  return "Unknown";
}

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) {
  throw Error(code, std::string(error_code_name(code)) + ": " + msg);
}

}  // namespace casdet
