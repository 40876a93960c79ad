#pragma once

#include <stdexcept>
#include <string>

namespace relsparse {

/// Failure category; doubles as the CLI exit code.
enum class ErrorKind : int {
    config = 2,
    data = 3,
    infeasible = 4,
    numerical = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Header does not match `s0_1..s0_K,a0,s1_1..s1_K[,reward]`.
struct SchemaError : DataError {
    explicit SchemaError(const std::string& what) : DataError("schema error: " + what) {}
};

/// A single CSV row failed to parse. `row` is 1-based over data rows.
struct ParseError : DataError {
    ParseError(std::size_t row, const std::string& what)
        : DataError("parse error in row " + std::to_string(row) + ": " + what), row(row) {}
    std::size_t row;
};

struct DimensionError : DataError {
    explicit DimensionError(const std::string& what) : DataError("dimension error: " + what) {}
};

struct DegenerateCovariateError : DataError {
    explicit DegenerateCovariateError(const std::string& covariate)
        : DataError("degenerate covariate '" + covariate + "': zero sample standard deviation"),
          covariate(covariate) {}
    std::string covariate;
};

/// Only one action label present in the training data.
struct SeparationError : DataError {
    explicit SeparationError(const std::string& what) : DataError("separation error: " + what) {}
};

struct PositivityError : Error {
    PositivityError(std::size_t row, double prob)
        : Error(ErrorKind::numerical,
                "positivity violated in row " + std::to_string(row) +
                    ": behavioral probability of observed action = " + std::to_string(prob)),
          row(row), prob(prob) {}
    std::size_t row;  // 1-based
    double prob;
};

struct ConvergenceError : Error {
    ConvergenceError(const std::string& what, double grad_norm)
        : Error(ErrorKind::numerical, what), grad_norm(grad_norm) {}
    double grad_norm;
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct InfeasibleSelectionError : Error {
    InfeasibleSelectionError(const std::string& what, double best_value, double vmin)
        : Error(ErrorKind::infeasible, what), best_value(best_value), vmin(vmin) {}
    double best_value;
    double vmin;
};

}  // namespace relsparse
