#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace collapse {

namespace detail {
inline std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}
}  // namespace detail

// Invalid argument outside an operation's domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Iterative solver gave up; carries the last residual.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + detail::sci(residual) + ")"),
          residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// Raised at the interpolation threshold where the linear system for the
// second-order scalars becomes singular.
class ThresholdError : public std::runtime_error {
public:
    ThresholdError(const std::string& what, double psi)
        : std::runtime_error(what + " (psi " + detail::sci(psi) + ")"), psi_(psi) {}
    double psi() const { return psi_; }

private:
    double psi_;
};

// Linear algebra failure inside a simulated fit.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace collapse
