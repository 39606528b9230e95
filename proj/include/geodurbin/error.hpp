#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geodurbin {

enum class ErrorCode {
  EmptyInput,
  DuplicateRegion,
  BadCoordinate,
  UnknownRegion,
  MissingValue,
  InvalidCount,
  ZeroDenominator,
  ZeroVariance,
  TooFewObservations,
  KTooLarge,
  DimensionMismatch,
  TooFewSimulations,
  NameClash,
  SingularFilter,
  RankDeficient,
  BoundaryRho,
  NumericalFailure,
  BadShape,
  NoGeometry,
  InvalidArgument,
  ParseError,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure in the library surfaces as this exception; `detail()` holds
// the offending identifier (region id, column name, ...) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail, std::string message = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::string message_;
};

}  // namespace geodurbin
