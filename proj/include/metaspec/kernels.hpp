#pragma once
// Dense double-precision kernels for the hot loops (killed-operator matvec,
// reductions). A scalar reference implementation is always available; an AVX2
// (x86) or NEON (aarch64) variant is selected once at runtime when the CPU
// supports it. All variants compute the same quantities; they may differ by
// rounding at the level of reassociated sums.

#include <cstddef>

namespace metaspec::kernels {

// y = A * x for row-major A (rows x cols), contiguous.
void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, double* y);
double dot(const double* x, const double* y, std::size_t n);
// sum_i w[i]*x[i]*y[i] (Q-weighted inner products).
double weighted_dot(const double* w, const double* x, const double* y, std::size_t n);
// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double max_abs_diff(const double* x, const double* y, std::size_t n);

// Name of the active backend: "scalar", "avx2", or "neon".
const char* backend();

// Scalar reference versions, always available (used by equivalence tests).
namespace scalar {
void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, double* y);
double dot(const double* x, const double* y, std::size_t n);
double weighted_dot(const double* w, const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double max_abs_diff(const double* x, const double* y, std::size_t n);
}  // namespace scalar

}  // namespace metaspec::kernels
