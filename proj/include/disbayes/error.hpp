#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace disbayes {

enum class ErrorCode {
  EmptyGraph,
  DisconnectedGraph,
  InvalidTopology,
  IndexOrder,
  IndexOutOfRange,
  NonpositiveScale,
  OutOfSupport,
  SupportMismatch,
  RepresentationMismatch,
  ObservationOutOfSupport,
  OutOfBox,
  NormalizerDivergence,
  IndefiniteHessian,
  NoConvergence,
  SingularFisher,
  NonIntegrable,
  UnsupportedModel,
  ConfigInvalid,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Numerical failures map to CLI exit code 3.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace disbayes
