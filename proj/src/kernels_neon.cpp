// NEON variants for aarch64 (NEON is baseline there, no special flags needed).

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

namespace metaspec::kernels::neon {

void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = A + i * cols;
        float64x2_t acc0 = vdupq_n_f64(0.0);
        float64x2_t acc1 = vdupq_n_f64(0.0);
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            acc0 = vfmaq_f64(acc0, vld1q_f64(row + j), vld1q_f64(x + j));
            acc1 = vfmaq_f64(acc1, vld1q_f64(row + j + 2), vld1q_f64(x + j + 2));
        }
        double acc = vaddvq_f64(acc0) + vaddvq_f64(acc1);
        for (; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

double dot(const double* x, const double* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double weighted_dot(const double* w, const double* x, const double* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t wx = vmulq_f64(vld1q_f64(w + i), vld1q_f64(x + i));
        acc = vfmaq_f64(acc, wx, vld1q_f64(y + i));
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += w[i] * x[i] * y[i];
    return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

double sum(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
    float64x2_t vm = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vm = vmaxq_f64(vm, vabsq_f64(vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i))));
    double m = vmaxvq_f64(vm);
    for (; i < n; ++i) {
        double d = std::fabs(x[i] - y[i]);
        if (d > m) m = d;
    }
    return m;
}

}  // namespace metaspec::kernels::neon

#endif
