#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bowkit {

enum class Errc {
  // numerics
  DimensionMismatch,
  NotPositiveDefinite,
  SingularMatrix,
  ZeroMatrix,
  // file formats
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  NonFiniteValue,
  IoFailure,
  InvalidData,
  // data / learning
  EmptySet,
  InsufficientData,
  DegenerateAtom,
  // encoding
  NotUnitNorm,
  SingularSupport,
  MaxIterations,
  // aggregation / classify
  LengthMismatch,
  NegativeEntry,
  ShapeMismatch,
  IdMismatch,
  DegenerateLabels,
  NotSymmetric,
  // configuration
  ConfigInvalid,
  InvalidArgument,
};

inline std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::SingularMatrix: return "SingularMatrix";
    case Errc::ZeroMatrix: return "ZeroMatrix";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InvalidData: return "InvalidData";
    case Errc::EmptySet: return "EmptySet";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::DegenerateAtom: return "DegenerateAtom";
    case Errc::NotUnitNorm: return "NotUnitNorm";
    case Errc::SingularSupport: return "SingularSupport";
    case Errc::MaxIterations: return "MaxIterations";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NegativeEntry: return "NegativeEntry";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::IdMismatch: return "IdMismatch";
    case Errc::DegenerateLabels: return "DegenerateLabels";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Broad failure classes, used by the CLI to pick an exit status.
enum class ErrorClass { Config = 1, Io = 2, Numeric = 3 };

inline ErrorClass classify_error(Errc e) {
  switch (e) {
    case Errc::ConfigInvalid:
    case Errc::InvalidArgument:
      return ErrorClass::Config;
    case Errc::BadMagic:
    case Errc::VersionUnsupported:
    case Errc::TruncatedFile:
    case Errc::NonFiniteValue:
    case Errc::IoFailure:
    case Errc::InvalidData:
      return ErrorClass::Io;
    default:
      return ErrorClass::Numeric;
  }
}

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace bowkit
