#include "typodist/error.hpp"

namespace typodist {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownLanguage: return "UnknownLanguage";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::ConflictingWrite: return "ConflictingWrite";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::CyclicRules: return "CyclicRules";
    case ErrorCode::NameCollision: return "NameCollision";
    case ErrorCode::UnresolvableId: return "UnresolvableId";
    case ErrorCode::EmptySourceSubset: return "EmptySourceSubset";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::EmptyScope: return "EmptyScope";
    case ErrorCode::NoSourcedFeatures: return "NoSourcedFeatures";
    case ErrorCode::MissingQualityRun: return "MissingQualityRun";
    case ErrorCode::TooFewObserved: return "TooFewObserved";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

bool is_input_format_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::FormatError:
    case ErrorCode::InvalidRecord:
    case ErrorCode::UnknownCategory:
    case ErrorCode::LevelOutOfRange:
    case ErrorCode::CyclicRules:
    case ErrorCode::NameCollision:
    case ErrorCode::UnresolvableId:
    case ErrorCode::ConflictingWrite:
      return true;
    default:
      return false;
  }
}

}  // namespace typodist
