#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dsn {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
    kSuccess = 0,
    kConfigError = 2,
    kNonConvergence = 3,
    kInvariantViolation = 4,
};

/// An argument lies outside the domain of a transform (e.g. at or beyond the
/// Marchenko-Pastur pole).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The effective noise variance came out negative. Carries every input so the
/// offending region of the fixed-point iteration can be diagnosed.
class NegativeVarianceError : public std::runtime_error {
public:
    NegativeVarianceError(const std::string& what, double chi, double p, double lambda,
                          double noise_var, double value)
        : std::runtime_error(what),
          chi(chi), p(p), lambda(lambda), noise_var(noise_var), value(value) {}

    double chi;
    double p;
    double lambda;
    double noise_var;
    double value;
};

/// An iterative method ran out of budget.
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what, std::vector<double> trace = {})
        : std::runtime_error(what), residual_trace(std::move(trace)) {}

    std::vector<double> residual_trace;
};

/// Bad user configuration (schema, ranges, dimensions).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace dsn
