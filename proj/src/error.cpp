#include "featprior/error.hpp"

namespace featprior {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::FactorizationFailed: return "FactorizationFailed";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::BatchMismatch: return "BatchMismatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::LayerOutOfRange: return "LayerOutOfRange";
    case ErrorCode::AllLayersFrozen: return "AllLayersFrozen";
    case ErrorCode::EmptyExpertSet: return "EmptyExpertSet";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::UnknownLabelColumn: return "UnknownLabelColumn";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

bool is_numerical_failure(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::FactorizationFailed:
    case ErrorCode::NonFiniteActivation:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::DivergedTraining:
      return true;
    default:
      return false;
  }
}

}  // namespace featprior
