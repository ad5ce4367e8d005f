#pragma once

#include <stdexcept>
#include <string>

namespace sisfm {

/// Base of every library error; code() is a stable identifier for the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Parameter outside its domain.
class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& what) : Error("argument_error", what) {}
};

/// Dimensions that do not agree.
class StructuralError : public Error {
public:
    explicit StructuralError(const std::string& what) : Error("structural_error", what) {}
};

/// Input data that fails validation; row/column are zero-based, -1 when not applicable.
class ValidationError : public Error {
public:
    ValidationError(const std::string& what, long row = -1, long column = -1)
        : Error("validation_error", what), row_(row), column_(column) {}
    long row() const noexcept { return row_; }
    long column() const noexcept { return column_; }

private:
    long row_;
    long column_;
};

/// A sampler block produced a non-finite value.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, long iteration, std::string block)
        : Error("numerical_error", what), iteration_(iteration), block_(std::move(block)) {}
    long iteration() const noexcept { return iteration_; }
    const std::string& block() const noexcept { return block_; }

private:
    long iteration_;
    std::string block_;
};

/// File system or parse failure.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io_error", what) {}
};

} // namespace sisfm
