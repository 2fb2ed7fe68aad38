#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uqlab {

/// Root of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between matrices, vectors or layers.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Out-of-range numeric parameter (negative noise, non-positive bound, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input data unusable for the requested operation (empty set, bad labels).
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a failed factorization.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// NaN loss during training; carries the epoch it occurred in.
class TrainingDivergedError : public NumericalError {
public:
    TrainingDivergedError(std::size_t epoch, const std::string& what)
        : NumericalError(what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Invalid model or experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Object used before it reached the required state (e.g. untrained model).
class StateError : public Error {
public:
    using Error::Error;
};

/// Metric whose value is mathematically undefined for the input
/// (average precision without positives).
class UndefinedMetricError : public DataError {
public:
    using DataError::DataError;
};

/// Malformed file content. `line()` is 1-based, 0 when not applicable.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// File written by an unsupported schema version.
class VersionError : public DataError {
public:
    using DataError::DataError;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace uqlab
