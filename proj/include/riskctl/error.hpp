#pragma once

#include <stdexcept>
#include <string>

namespace riskctl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied an argument outside the operation's domain (e.g. alpha >= beta).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A coefficient field violated a pointwise model invariant (sigma^2 <= 0, k <= 0, ...).
class InvalidModelError : public Error {
public:
    InvalidModelError(std::string what, double x)
        : Error(std::move(what) + " at x = " + std::to_string(x)), x_(x) {}
    double where() const noexcept { return x_; }

private:
    double x_;
};

/// The model does not satisfy one of the structural assumptions the theory
/// relies on. `condition()` names it (e.g. "h-ass1", "Hpm-lims").
class AssumptionError : public Error {
public:
    AssumptionError(std::string condition, const std::string& detail)
        : Error("assumption " + condition + " violated: " + detail),
          condition_(std::move(condition)) {}
    const std::string& condition() const noexcept { return condition_; }

private:
    std::string condition_;
};

/// An iterative numerical method failed to reach its tolerance.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double lower, double upper)
        : Error(what + " (final bracket [" + std::to_string(lower) + ", " +
                std::to_string(upper) + "])"),
          lower_(lower), upper_(upper) {}
    explicit NumericalError(const std::string& what) : Error(what) {}

    double bracket_lower() const noexcept { return lower_; }
    double bracket_upper() const noexcept { return upper_; }

private:
    double lower_ = 0.0;
    double upper_ = 0.0;
};

}  // namespace riskctl
