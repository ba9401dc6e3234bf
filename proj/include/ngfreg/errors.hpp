#pragma once

#include <stdexcept>
#include <string>

namespace ngfreg {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite coordinates, malformed arrays, violated type invariants.
class InvalidInputError : public Error {
public:
    using Error::Error;
};

// Two operands disagree on grid shape.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Out-of-range configuration value (eta <= 0, bins < 8, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Constant image where a spread of values is required.
class DegenerateError : public Error {
public:
    using Error::Error;
};

// Intensities outside the normalized [0,1] range.
class RangeError : public Error {
public:
    using Error::Error;
};

class CoverageError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class PlacementError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ngfreg
