#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qgle {

enum class ErrorKind {
  kDimensionMismatch,
  kPrecondition,
  kNoSolution,
  kInconsistent,
  kNotPositive,
  kNonConservative,
  kNumericalFailure,
  kUnstable,
  kSolveFailure,
  kInfeasible,
  kSearchExhausted,
  kIntegrationBlowup,
  kMissingNoise,
  kSeriesTooShort,
  kNoSignal,
  kParse,
  kValidation,
  kIo,
};

std::string_view to_string(ErrorKind kind);

/// Every library failure is reported through this type; `kind()` is the
/// machine-readable category surfaced by the CLI.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by the integrators; carries the step at which a non-finite value
/// first appeared.
class IntegrationBlowup : public Error {
 public:
  IntegrationBlowup(long step, const std::string& message)
      : Error(ErrorKind::kIntegrationBlowup, message), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Parse failure with a position inside the parsed text.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(ErrorKind::kParse, message), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace qgle
