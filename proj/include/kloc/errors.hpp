#pragma once

#include <stdexcept>
#include <string>

namespace kloc {

// Failure categories. Each maps to a distinct CLI exit status (see exit_code).
enum class ErrorCode {
  kUsage,
  kIo,
  kDegenerateGeometry,
  kNoConsensus,
  kInvalidRotation,
  kDegenerateWeights,
  kInsufficientPoints,
  kDegenerateGradient,
  kBehindCamera,
  kRange,
  kShapeMismatch,
  kInvalidConfig,
  kTrainingAborted,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
      return 2;
    case ErrorCode::kIo:
      return 3;
    case ErrorCode::kDegenerateGeometry:
      return 4;
    case ErrorCode::kNoConsensus:
      return 5;
    default:
      return 1;
  }
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
      return "usage";
    case ErrorCode::kIo:
      return "io";
    case ErrorCode::kDegenerateGeometry:
      return "degenerate-geometry";
    case ErrorCode::kNoConsensus:
      return "no-consensus";
    case ErrorCode::kInvalidRotation:
      return "invalid-rotation";
    case ErrorCode::kDegenerateWeights:
      return "degenerate-weights";
    case ErrorCode::kInsufficientPoints:
      return "insufficient-points";
    case ErrorCode::kDegenerateGradient:
      return "degenerate-gradient";
    case ErrorCode::kBehindCamera:
      return "behind-camera";
    case ErrorCode::kRange:
      return "range";
    case ErrorCode::kShapeMismatch:
      return "shape-mismatch";
    case ErrorCode::kInvalidConfig:
      return "invalid-config";
    case ErrorCode::kTrainingAborted:
      return "training-aborted";
  }
  return "unknown";
}

}  // namespace kloc
