#pragma once

#include <stdexcept>
#include <string>

namespace iamod {

enum class ErrorCode {
  LayerViolation,
  MissingCapacity,
  NonPositiveTime,
  NonPositiveInput,
  BadSpec,
  SchemaError,
  UnitError,
  EmptyDemand,
  OverflowRisk,
  DimensionMismatch,
  NotOptimal,
  MismatchedProvenance,
  UnboundedCustomerProblem,
  InfeasibleRebalancing,
  NumericalBreakdown,
  BadArgument,
};

const char* to_string(ErrorCode code);

/// Domain error carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace iamod
