#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fomlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of a formula (d <= 0, xi <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed input files, inconsistent models, unknown configuration keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Data cannot support the requested estimate (too few points, wrong orientation).
class DataError : public Error {
public:
    using Error::Error;
};

/// A signal is below the noise floor needed for the estimate.
class InsufficientSignalError : public DataError {
public:
    using DataError::DataError;
};

/// An iterative procedure stopped before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double achieved)
        : Error(what + " (achieved tolerance " + std::to_string(achieved) + ")"), achieved_(achieved) {}

    double achieved_tolerance() const noexcept { return achieved_; }

private:
    double achieved_;
};

/// A surface element touches the plate (non-positive local gap).
class ContactError : public Error {
public:
    ContactError(std::size_t row, std::size_t col, double gap)
        : Error("surface contact at pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                "), local gap " + std::to_string(gap) + " m"),
          row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

}  // namespace fomlab
