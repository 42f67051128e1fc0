#include "metaspec/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace metaspec::kernels {

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void matvec(const double*, std::size_t, std::size_t, const double*, double*);
double dot(const double*, const double*, std::size_t);
double weighted_dot(const double*, const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
double sum(const double*, std::size_t);
double max_abs_diff(const double*, const double*, std::size_t);
bool compiled();
}  // namespace avx2
#endif
#if defined(__aarch64__)
namespace neon {
void matvec(const double*, std::size_t, std::size_t, const double*, double*);
double dot(const double*, const double*, std::size_t);
double weighted_dot(const double*, const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
double sum(const double*, std::size_t);
double max_abs_diff(const double*, const double*, std::size_t);
}  // namespace neon
#endif

namespace {

struct Table {
    void (*matvec)(const double*, std::size_t, std::size_t, const double*, double*);
    double (*dot)(const double*, const double*, std::size_t);
    double (*weighted_dot)(const double*, const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max_abs_diff)(const double*, const double*, std::size_t);
    const char* name;
};

Table pick_backend() {
    Table t = {scalar::matvec, scalar::dot, scalar::weighted_dot,
               scalar::axpy,   scalar::sum, scalar::max_abs_diff, "scalar"};
    const char* force = std::getenv("METASPEC_NO_SIMD");
    if (force && std::strcmp(force, "0") != 0) return t;
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2::compiled() && __builtin_cpu_supports("avx2") &&
        __builtin_cpu_supports("fma")) {
        t = {avx2::matvec, avx2::dot, avx2::weighted_dot,
             avx2::axpy,   avx2::sum, avx2::max_abs_diff, "avx2"};
    }
#elif defined(__aarch64__)
    t = {neon::matvec, neon::dot, neon::weighted_dot,
         neon::axpy,   neon::sum, neon::max_abs_diff, "neon"};
#endif
    return t;
}

const Table& table() {
    static const Table t = pick_backend();
    return t;
}

}  // namespace

void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
    table().matvec(A, rows, cols, x, y);
}
double dot(const double* x, const double* y, std::size_t n) {
    return table().dot(x, y, n);
}
double weighted_dot(const double* w, const double* x, const double* y, std::size_t n) {
    return table().weighted_dot(w, x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
    table().axpy(a, x, y, n);
}
double sum(const double* x, std::size_t n) { return table().sum(x, n); }
double max_abs_diff(const double* x, const double* y, std::size_t n) {
    return table().max_abs_diff(x, y, n);
}
const char* backend() { return table().name; }

}  // namespace metaspec::kernels
