#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fcd {

enum class ErrorCode {
    InvalidSignal,
    TooFewPoints,
    SegmentTooSmall,
    UnknownModel,
    ParseError,
    UnknownIdentifier,
    ContinuityUnsolvable,
    ContinuitySingular,
    EvalDomainError,
    SolveFailed,
    BadInitialGuess,
    NoClosedFormIntegral,
    EmptySegment,
    ExtrapolationError,
    ConfigError,
    DataError,
};

const char* error_code_name(ErrorCode code);

/// Library-wide exception. `position` is a byte offset for parse errors,
/// a point/row index for evaluation and data errors, -1 otherwise.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, long position = -1)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code),
          position_(position) {}

    ErrorCode code() const { return code_; }
    long position() const { return position_; }

private:
    ErrorCode code_;
    long position_;
};

}  // namespace fcd
