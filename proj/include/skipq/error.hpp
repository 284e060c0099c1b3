#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skipq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent shapes or invalid model tables (rows not summing to one, mismatched sizes).
class StructureError : public Error {
public:
    using Error::Error;
};

/// A state or stage outside the domain an operation is defined on.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Violated caller contract (value bounds, terminal conditions).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Random instance generation gave up after its rejection budget.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// An enumeration or construction would exceed its configured size cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// An iterative solver stopped before meeting its acceptance condition.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double worst_value)
        : Error(what), worst_value_(worst_value) {}

    double worst_value() const { return worst_value_; }

private:
    double worst_value_;
};

/// Malformed input document; line is 1-based, 0 when not line oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

}  // namespace skipq
