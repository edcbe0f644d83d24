#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace threatnet {

enum class ErrorCode {
  InvalidArgument,
  InvalidModel,
  DegenerateHolding,
  TotalEvidenceZero,
  UnmonitoredTick,
  UnknownEntity,
  DuplicateEntity,
  DuplicateEdge,
  UnknownEdge,
  UnknownCell,
  TickMismatch,
  InvalidBatch,
  SchemaError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::DegenerateHolding: return "DegenerateHolding";
    case ErrorCode::TotalEvidenceZero: return "TotalEvidenceZero";
    case ErrorCode::UnmonitoredTick: return "UnmonitoredTick";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::DuplicateEntity: return "DuplicateEntity";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::UnknownEdge: return "UnknownEdge";
    case ErrorCode::UnknownCell: return "UnknownCell";
    case ErrorCode::TickMismatch: return "TickMismatch";
    case ErrorCode::InvalidBatch: return "InvalidBatch";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure surfaced by the library. `path` is a JSON pointer into the
/// offending document for schema errors and empty otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string path = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message),
        path_(std::move(path)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::string& path() const noexcept { return path_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::string path_;
};

}  // namespace threatnet
