#pragma once

#include <stdexcept>
#include <string>

namespace procspace {

// Base of every exception thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A time or index lies outside the admissible range.
struct RangeError : Error {
    using Error::Error;
};

// Input violates a mathematical precondition (empty ensemble, p < 1, ...).
struct DomainError : Error {
    using Error::Error;
};

// Grids, dimensions or batch layouts do not match.
struct ShapeError : Error {
    using Error::Error;
};

// A coefficient returned NaN or overflowed during time stepping.
struct NumericError : Error {
    NumericError(const std::string& what, int step)
        : Error(what + " (step " + std::to_string(step) + ")"), step(step) {}
    int step;
};

// Invalid parameter value, such as an odd gauge exponent or a CFL violation.
struct ParameterError : Error {
    using Error::Error;
};

// The caller supplied objects that do not meet the operation's structural contract.
struct ContractError : Error {
    using Error::Error;
};

// Valid request outside the supported envelope (size caps, multi-d Fourier metric, ...).
struct UnsupportedError : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& what, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
    int line;
};

}  // namespace procspace
