#pragma once

#include <stdexcept>
#include <string>

namespace featprior {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotSymmetric,
  NotPositiveDefinite,
  FactorizationFailed,
  LabelOutOfRange,
  NotScalarLoss,
  NonFiniteActivation,
  NonFiniteGradient,
  DivergedTraining,
  BatchMismatch,
  BatchTooSmall,
  LayerOutOfRange,
  AllLayersFrozen,
  EmptyExpertSet,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  RaggedRows,
  NonNumericCell,
  UnknownLabelColumn,
  FingerprintMismatch,
  CorruptFile,
  IoError,
  ConfigError,
};

const char* error_code_name(ErrorCode code) noexcept;

// Numerical failures (exit code 2 at the CLI) as opposed to user/config errors.
bool is_numerical_failure(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace featprior
