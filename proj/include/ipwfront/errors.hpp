#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ipwfront {

// Stable machine-readable error codes.  The CLI maps these to a structured
// JSON object on the error stream; library users can switch on the code.
enum class ErrorCode {
    NonFiniteInput,
    NegativeVariance,
    ZeroSecondMoment,
    InvalidDimension,
    DimensionMismatch,
    ZeroPropensity,
    DegenerateSE,
    NotBinary,
    NegativeXi,
    EmptyFrontier,
    NonPositiveInput,
    NoConvergence,
    BoundaryPolicy,
    LambdaOutOfRange,
    InsufficientSupport,
    ParseError,
    IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, std::string detail, std::string field = "")
        : std::runtime_error(std::string(to_string(code)) + ": " + detail),
          code_(code), detail_(std::move(detail)), field_(std::move(field)) {}

    ErrorCode code() const { return code_; }
    const std::string& detail() const { return detail_; }
    // Name of the offending input/field when one can be pinpointed, else "".
    const std::string& field() const { return field_; }

  private:
    ErrorCode code_;
    std::string detail_;
    std::string field_;
};

[[noreturn]] inline void fail(ErrorCode code, std::string detail, std::string field = "") {
    throw Error(code, std::move(detail), std::move(field));
}

} // namespace ipwfront
