#include "qgle/error.hpp"

namespace qgle {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kPrecondition: return "Precondition";
    case ErrorKind::kNoSolution: return "NoSolution";
    case ErrorKind::kInconsistent: return "Inconsistent";
    case ErrorKind::kNotPositive: return "NotPositive";
    case ErrorKind::kNonConservative: return "NonConservative";
    case ErrorKind::kNumericalFailure: return "NumericalFailure";
    case ErrorKind::kUnstable: return "Unstable";
    case ErrorKind::kSolveFailure: return "SolveFailure";
    case ErrorKind::kInfeasible: return "Infeasible";
    case ErrorKind::kSearchExhausted: return "SearchExhausted";
    case ErrorKind::kIntegrationBlowup: return "IntegrationBlowup";
    case ErrorKind::kMissingNoise: return "MissingNoise";
    case ErrorKind::kSeriesTooShort: return "SeriesTooShort";
    case ErrorKind::kNoSignal: return "NoSignal";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kValidation: return "ValidationError";
    case ErrorKind::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace qgle
