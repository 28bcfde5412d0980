#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oktacal {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation (e.g. a TCC value above 1).
class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A feature variant needs a covariate the forecast does not carry.
class MissingCovariateError : public Error {
public:
    using Error::Error;
};

/// LogS evaluated on a PMF with zero mass at the observation.
class ZeroProbabilityError : public Error {
public:
    using Error::Error;
};

class DegenerateSeriesError : public Error {
public:
    using Error::Error;
};

class IncomparableSeriesError : public Error {
public:
    using Error::Error;
};

class InsufficientHistoryError : public Error {
public:
    using Error::Error;
};

class EmptyDataError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; carries the 1-based line number when known.
class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace oktacal
