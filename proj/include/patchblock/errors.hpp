#pragma once

#include <stdexcept>
#include <string>

namespace patchblock {

// Error taxonomy used across the library. The CLI maps each class to a
// distinct exit code, so new failure kinds should extend this hierarchy
// rather than throw std::runtime_error directly.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Raised when a chunk grid is too small for neighbor statistics.
class DegenerateGridError : public Error {
public:
    using Error::Error;
};

// Raised when a split candidate leaves one side of the partition empty.
class UndefinedSplitError : public Error {
public:
    using Error::Error;
};

}  // namespace patchblock
