#pragma once

#include <stdexcept>
#include <string>

namespace qdspin {

/// Input outside the mathematical or physical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Numerical integration failed (unstable step, lost positivity).
class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Step size too coarse for the fastest scale of the problem.
class StepSizeError : public IntegrationError {
public:
    StepSizeError(const std::string& what, double product)
        : IntegrationError(what), product_(product) {}
    /// dt * max(|H|, rates) that triggered the refusal.
    double product() const noexcept { return product_; }

private:
    double product_;
};

/// Normal equations of a least-squares step could not be solved.
class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, double condition)
        : std::runtime_error(what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

}  // namespace qdspin
