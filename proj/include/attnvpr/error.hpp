#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attnvpr {

enum class ErrorCode {
  BadMagic,
  ShapeMismatch,
  NonFinite,
  IoFailure,
  DuplicateId,
  CoordinateOutOfRange,
  MalformedRow,
  DimMismatch,
  NormViolation,
  UnparseableResponse,
  EmptyPointList,
  SingularKernel,
  EmptyCity,
  ProviderUnavailable,
  ExhaustedRetries,
  FixtureMissing,
  AllZeroWeights,
  NegativeActivation,
  DegenerateScale,
  ZeroVector,
  EmptyDb,
  InsufficientHits,
  MissingGroundTruth,
  MissingAttention,
  InvalidArgument,
};

std::string_view error_name(ErrorCode code) noexcept;

/// Every failure in the library surfaces as this exception. The CLI prints
/// `error_name(code())` and exits with status 2.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace attnvpr
