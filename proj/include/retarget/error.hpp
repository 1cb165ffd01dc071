#pragma once

#include <stdexcept>
#include <string>

namespace retarget {

// Exception hierarchy. The CLI maps categories onto exit codes:
// usage → 1, input data (parse/config/validation/degenerate) → 2,
// numeric/convergence → 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument to a math primitive (zero vector, non-rotation matrix, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// A skeleton frame whose geometry cannot define a heading or limb direction.
class DegenerateFrameError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class SolverError : public NumericError {
public:
    using NumericError::NumericError;
};

class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace retarget
