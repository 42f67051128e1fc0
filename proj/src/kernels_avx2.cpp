// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; callers reach it through the runtime dispatch table.

#if defined(__x86_64__) || defined(_M_X64)

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace metaspec::kernels::avx2 {

static inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = A + i * cols;
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        std::size_t j = 0;
        for (; j + 8 <= cols; j += 8) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + j),
                                   _mm256_loadu_pd(x + j), acc0);
            acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(row + j + 4),
                                   _mm256_loadu_pd(x + j + 4), acc1);
        }
        for (; j + 4 <= cols; j += 4)
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(row + j),
                                   _mm256_loadu_pd(x + j), acc0);
        double acc = hsum(_mm256_add_pd(acc0, acc1));
        for (; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

double dot(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double weighted_dot(const double* w, const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d wx = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(x + i));
        acc = _mm256_fmadd_pd(wx, _mm256_loadu_pd(y + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += w[i] * x[i] * y[i];
    return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                     _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
    const __m256d signmask = _mm256_set1_pd(-0.0);
    __m256d vm = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        vm = _mm256_max_pd(vm, _mm256_andnot_pd(signmask, d));
    }
    double tmp[4];
    _mm256_storeu_pd(tmp, vm);
    double m = tmp[0];
    for (int k = 1; k < 4; ++k)
        if (tmp[k] > m) m = tmp[k];
    for (; i < n; ++i) {
        double d = std::fabs(x[i] - y[i]);
        if (d > m) m = d;
    }
    return m;
}

bool compiled() { return true; }

}  // namespace metaspec::kernels::avx2

#else  // compiler lacks -mavx2: keep the symbols, never selected at runtime

#include "metaspec/kernels.hpp"

namespace metaspec::kernels::avx2 {

void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
    scalar::matvec(A, rows, cols, x, y);
}
double dot(const double* x, const double* y, std::size_t n) {
    return scalar::dot(x, y, n);
}
double weighted_dot(const double* w, const double* x, const double* y, std::size_t n) {
    return scalar::weighted_dot(w, x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
    scalar::axpy(a, x, y, n);
}
double sum(const double* x, std::size_t n) { return scalar::sum(x, n); }
double max_abs_diff(const double* x, const double* y, std::size_t n) {
    return scalar::max_abs_diff(x, y, n);
}
bool compiled() { return false; }

}  // namespace metaspec::kernels::avx2

#endif

#endif
