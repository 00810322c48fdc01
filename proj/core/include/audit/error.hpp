#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace audit {

enum class ErrorCode {
  BackendUnavailable,
  ProtocolError,
  ImageUnresolvable,
  GenerationFailed,
  CaptionUnparseable,
  EditFailed,
  EditUnparseable,
  FilterExhausted,
  JudgeError,
  SummarizerError,
  GroupTooSmall,
  NonFiniteGradient,
  StepOutOfRange,
  EmptyRun,
  EmptyPool,
  InsufficientGenerated,
  FormatError,
  CorruptLog,
  ConfigError,
  NotFound,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Thrown by backends for transport or 5xx-class failures. The gateway retries
// these; anything else propagates immediately.
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Log corruption carries the 0-based line index where replay stopped.
class CorruptLogError : public Error {
 public:
  CorruptLogError(std::size_t position, const std::string& what)
      : Error(ErrorCode::CorruptLog, what + " at event index " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace audit
