#pragma once

#include <stdexcept>
#include <string>

namespace lcq {

/// Base class for every error the library reports.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration / arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents (bad magic, truncation, count mismatch).
class ParseError : public IoError {
public:
    using IoError::IoError;
};

/// Divergence, singular systems, non-finite values.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace lcq
