#include "a2s/error.hpp"

namespace a2s {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRoll: return "MalformedRoll";
    case ErrorCode::InsufficientBeats: return "InsufficientBeats";
    case ErrorCode::NonDownbeatStart: return "NonDownbeatStart";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::MissingContext: return "MissingContext";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::ContractViolation: return "ContractViolation";
    case ErrorCode::DataError: return "DataError";
    case ErrorCode::ResumeMismatch: return "ResumeMismatch";
    case ErrorCode::AnnotationGap: return "AnnotationGap";
    case ErrorCode::CheckpointStageError: return "CheckpointStageError";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Error";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UsageError:
      return 2;
    case ErrorCode::ShapeError:
    case ErrorCode::ContractViolation:
      return 1;
    default:
      return 3;
  }
}

}  // namespace a2s
