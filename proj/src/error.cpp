#include "attnvpr/error.hpp"

namespace attnvpr {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NormViolation: return "NormViolation";
    case ErrorCode::UnparseableResponse: return "UnparseableResponse";
    case ErrorCode::EmptyPointList: return "EmptyPointList";
    case ErrorCode::SingularKernel: return "SingularKernel";
    case ErrorCode::EmptyCity: return "EmptyCity";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorCode::FixtureMissing: return "FixtureMissing";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::NegativeActivation: return "NegativeActivation";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyDb: return "EmptyDb";
    case ErrorCode::InsufficientHits: return "InsufficientHits";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::MissingAttention: return "MissingAttention";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace attnvpr
