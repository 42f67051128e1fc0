#pragma once

#include <stdexcept>
#include <string>

namespace metaspec {

// Bad or inconsistent input data (files, matrices, arguments). CLI exit code 4.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& m) : std::runtime_error(m) {}
};

// Request outside an operation's mathematical domain (e.g. Laplace argument at
// or beyond the convergence abscissa). CLI exit code 3.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& m) : std::runtime_error(m) {}
};

// A uniqueness assumption failed (argmax ties, multiple kernel vectors).
struct DegeneracyError : std::runtime_error {
    explicit DegeneracyError(const std::string& m) : std::runtime_error(m) {}
};

// Numerical breakdown (non-convergence, singular factorization).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace metaspec
