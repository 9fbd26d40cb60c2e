#pragma once

#include <stdexcept>
#include <string>

namespace cplnet {

/// Invalid configuration or specification input (maps to CLI exit code 2).
class SpecError : public std::runtime_error {
public:
    explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

/// No physically feasible operating point (maps to CLI exit code 3).
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& msg, int converter_index)
        : std::runtime_error(msg), converter(converter_index) {}
    int converter;  // 0-based index of the violating converter, -1 if global
};

/// Iteration failed to reach tolerance (maps to CLI exit code 4).
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& msg, double final_residual)
        : std::runtime_error(msg), residual(final_residual) {}
    double residual;
};

/// Numerical failure: divergence, insufficient bracket, singular block (exit code 4).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cplnet
