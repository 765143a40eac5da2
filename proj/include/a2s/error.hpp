#pragma once

#include <stdexcept>
#include <string>

namespace a2s {

enum class ErrorCode {
  MalformedRoll,
  InsufficientBeats,
  NonDownbeatStart,
  BackendUnavailable,
  MissingContext,
  AlignmentError,
  ShapeError,
  ContractViolation,
  DataError,
  ResumeMismatch,
  AnnotationGap,
  CheckpointStageError,
  ConfigMismatch,
  LengthMismatch,
  UsageError,
  IoError,
};

const char* to_string(ErrorCode code);

// Process exit code for a given error: 2 usage, 3 data, 1 internal.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace a2s
