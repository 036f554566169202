#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sparsewalk {

enum class Errc {
  InvalidArgument,
  // lattice_kernel
  EmptySupport,
  NotSymmetric,
  NotNormalized,
  NotIrreducible,
  BoxTooSmall,
  ThetaNotOnSpectrum,
  // resolvent
  LambdaInSpectrum,
  QuadratureNotConverged,
  SeriesDiverges,
  NonPositiveValue,
  TooFewPoints,
  // potential
  AnchorBelowV0,
  InsufficientSupport,
  NotFoundInBox,
  ZeroV0,
  // birman_schwinger
  BSNotInvertible,
  Epsilon0Zero,
  AlphaTooLarge,
  // spectral_lab
  BoxTooLarge,
  NoConvergence,
  NoRootAboveOne,
  NotStabilized,
  GapNotCertified,
  // gibbs_dynamics
  EigenResidualTooLarge,
  NonPositivePhi,
  RowDeficitTooLarge,
  StartOutsideBox,
  HorizonExceedsBox,
  NoDecayDetected,
  // cli
  ConfigInvalid,
  ExperimentFailed,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptySupport: return "EmptySupport";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::NotIrreducible: return "NotIrreducible";
    case Errc::BoxTooSmall: return "BoxTooSmall";
    case Errc::ThetaNotOnSpectrum: return "ThetaNotOnSpectrum";
    case Errc::LambdaInSpectrum: return "LambdaInSpectrum";
    case Errc::QuadratureNotConverged: return "QuadratureNotConverged";
    case Errc::SeriesDiverges: return "SeriesDiverges";
    case Errc::NonPositiveValue: return "NonPositiveValue";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::AnchorBelowV0: return "AnchorBelowV0";
    case Errc::InsufficientSupport: return "InsufficientSupport";
    case Errc::NotFoundInBox: return "NotFoundInBox";
    case Errc::ZeroV0: return "ZeroV0";
    case Errc::BSNotInvertible: return "BSNotInvertible";
    case Errc::Epsilon0Zero: return "Epsilon0Zero";
    case Errc::AlphaTooLarge: return "AlphaTooLarge";
    case Errc::BoxTooLarge: return "BoxTooLarge";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::NoRootAboveOne: return "NoRootAboveOne";
    case Errc::NotStabilized: return "NotStabilized";
    case Errc::GapNotCertified: return "GapNotCertified";
    case Errc::EigenResidualTooLarge: return "EigenResidualTooLarge";
    case Errc::NonPositivePhi: return "NonPositivePhi";
    case Errc::RowDeficitTooLarge: return "RowDeficitTooLarge";
    case Errc::StartOutsideBox: return "StartOutsideBox";
    case Errc::HorizonExceedsBox: return "HorizonExceedsBox";
    case Errc::NoDecayDetected: return "NoDecayDetected";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::ExperimentFailed: return "ExperimentFailed";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code and the module that raised it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string_view module, const std::string& what)
      : std::runtime_error(std::string(module) + ": " + std::string(to_string(code)) + ": " + what),
        code_(code),
        module_(module) {}

  Errc code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  Errc code_;
  std::string module_;
};

[[noreturn]] inline void fail(Errc code, std::string_view module, const std::string& what) {
  throw Error(code, module, what);
}

}  // namespace sparsewalk
