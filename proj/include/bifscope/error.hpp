#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bifscope {

/// Every failure raised by the library carries one of these kinds so callers
/// (the CLI in particular) can map them onto exit codes without string matching.
enum class ErrorKind {
  SyntaxError,
  NonIntegerExponent,
  UnknownIdentifier,
  EvaluationPole,
  NotRationalInZ,
  InvalidMarkedPoint,
  DegenerateEverywhere,
  DegenerateParameter,
  NoConvergence,
  NonFinitePotential,
  ZeroMassVector,
  MultiplierDegeneration,
  PathNewtonFailure,
  NewtonDivergence,
  AttractingLanding,
  TangentIntersection,
  NotRepelling,
  OutsideLinearizationDomain,
  InvalidArgument,
  IoError,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::NonIntegerExponent: return "NonIntegerExponent";
    case ErrorKind::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorKind::EvaluationPole: return "EvaluationPole";
    case ErrorKind::NotRationalInZ: return "NotRationalInZ";
    case ErrorKind::InvalidMarkedPoint: return "InvalidMarkedPoint";
    case ErrorKind::DegenerateEverywhere: return "DegenerateEverywhere";
    case ErrorKind::DegenerateParameter: return "DegenerateParameter";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NonFinitePotential: return "NonFinitePotential";
    case ErrorKind::ZeroMassVector: return "ZeroMassVector";
    case ErrorKind::MultiplierDegeneration: return "MultiplierDegeneration";
    case ErrorKind::PathNewtonFailure: return "PathNewtonFailure";
    case ErrorKind::NewtonDivergence: return "NewtonDivergence";
    case ErrorKind::AttractingLanding: return "AttractingLanding";
    case ErrorKind::TangentIntersection: return "TangentIntersection";
    case ErrorKind::NotRepelling: return "NotRepelling";
    case ErrorKind::OutsideLinearizationDomain: return "OutsideLinearizationDomain";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Configuration-type errors (bad expressions, bad arguments) as opposed to
  /// numeric failures discovered while computing.
  bool is_config_error() const noexcept {
    switch (kind_) {
      case ErrorKind::SyntaxError:
      case ErrorKind::NonIntegerExponent:
      case ErrorKind::UnknownIdentifier:
      case ErrorKind::NotRationalInZ:
      case ErrorKind::InvalidMarkedPoint:
      case ErrorKind::InvalidArgument:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

/// Parser failure with the byte offset into the source and the token that was expected.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, std::string expected, ErrorKind kind = ErrorKind::SyntaxError)
      : Error(kind, "at offset " + std::to_string(offset) + ": expected " + expected),
        offset_(offset),
        expected_(std::move(expected)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::string expected_;
};

}  // namespace bifscope
