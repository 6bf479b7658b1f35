#pragma once

#include <stdexcept>
#include <string>

namespace allnc {

// Shapes that do not chain (matmul inner dims, layer widths, CSV columns).
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Inputs on which the operation is undefined: zero vectors, zero norms.
class DegenerateInputError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Caller broke a precondition (bad label, non-scalar root, empty batch).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Argument outside the mathematical domain of the function (C < 2, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A function produced NaN/Inf during a finite-difference probe.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Long-tail settings that round some class to zero samples.
class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(const std::string& what, std::string parameter)
        : std::runtime_error(what), parameter_(std::move(parameter)) {}
    const std::string& parameter() const noexcept { return parameter_; }

private:
    std::string parameter_;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace allnc
