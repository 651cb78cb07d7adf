#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace typodist {

enum class ErrorCode {
  UnknownLanguage,
  UnknownFeature,
  UnknownSource,
  ConflictingWrite,
  InvalidRecord,
  UnknownCategory,
  LevelOutOfRange,
  CyclicRules,
  NameCollision,
  UnresolvableId,
  EmptySourceSubset,
  ModeMismatch,
  EmptyScope,
  NoSourcedFeatures,
  MissingQualityRun,
  TooFewObserved,
  DegenerateInput,
  FormatError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// True for errors caused by malformed input files rather than bad queries.
bool is_input_format_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace typodist
