#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drm {

enum class ErrorCode {
  DimensionMismatch,
  OrderUnsupported,
  NonFiniteValue,
  MissingSecondDerivative,
  EmptyBatch,
  EigenFailure,
  ComplexSpectrum,
  InsufficientSpectrum,
  AllUnclassified,
  NonFiniteGradient,
  NonFiniteLoss,
  InvalidSpec,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::OrderUnsupported: return "OrderUnsupported";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingSecondDerivative: return "MissingSecondDerivative";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::ComplexSpectrum: return "ComplexSpectrum";
    case ErrorCode::InsufficientSpectrum: return "InsufficientSpectrum";
    case ErrorCode::AllUnclassified: return "AllUnclassified";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to a diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace drm
