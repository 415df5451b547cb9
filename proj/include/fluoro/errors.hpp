#pragma once

#include <stdexcept>
#include <string>

namespace fluoro {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced or consumed.
class NumericError : public Error {
public:
    using Error::Error;
};

// API misuse: non-scalar loss, consumed graph, etc.
class ContractError : public Error {
public:
    using Error::Error;
};

// Value outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk data (bad magic, truncation, version mismatch).
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Metric has no defined value for the given input (no comparable pairs,
// zero variance, ...).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

}  // namespace fluoro
