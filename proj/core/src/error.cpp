#include "audit/error.hpp"

namespace audit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ImageUnresolvable: return "ImageUnresolvable";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::CaptionUnparseable: return "CaptionUnparseable";
    case ErrorCode::EditFailed: return "EditFailed";
    case ErrorCode::EditUnparseable: return "EditUnparseable";
    case ErrorCode::FilterExhausted: return "FilterExhausted";
    case ErrorCode::JudgeError: return "JudgeError";
    case ErrorCode::SummarizerError: return "SummarizerError";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::EmptyRun: return "EmptyRun";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::InsufficientGenerated: return "InsufficientGenerated";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

}  // namespace audit
