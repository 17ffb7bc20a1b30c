#include "disbayes/error.hpp"

namespace disbayes {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::InvalidTopology: return "InvalidTopology";
    case ErrorCode::IndexOrder: return "IndexOrder";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NonpositiveScale: return "NonpositiveScale";
    case ErrorCode::OutOfSupport: return "OutOfSupport";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::RepresentationMismatch: return "RepresentationMismatch";
    case ErrorCode::ObservationOutOfSupport: return "ObservationOutOfSupport";
    case ErrorCode::OutOfBox: return "OutOfBox";
    case ErrorCode::NormalizerDivergence: return "NormalizerDivergence";
    case ErrorCode::IndefiniteHessian: return "IndefiniteHessian";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularFisher: return "SingularFisher";
    case ErrorCode::NonIntegrable: return "NonIntegrable";
    case ErrorCode::UnsupportedModel: return "UnsupportedModel";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::NormalizerDivergence:
    case ErrorCode::IndefiniteHessian:
    case ErrorCode::NoConvergence:
    case ErrorCode::SingularFisher:
    case ErrorCode::NonIntegrable:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace disbayes
