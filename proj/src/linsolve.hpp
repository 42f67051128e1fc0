#pragma once

#include <Eigen/Dense>
#include <complex>
#include <type_traits>

#include "metaspec/errors.hpp"

namespace metaspec::detail {

// Pivoted LU with one iterative-refinement pass; the correction residual is
// accumulated in extended precision, which matters when the killed operator
// is nearly singular (deep metastable wells).
template <typename Scalar>
class RefinedLU {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Wide = std::conditional_t<std::is_same_v<Scalar, double>, long double,
                                    std::complex<long double>>;

    explicit RefinedLU(Mat a) : a_(std::move(a)), lu_(a_) {}

    const Mat& matrix() const { return a_; }

    // Solves a_ x = b; returns the max-norm residual of the refined solution.
    // Refinement iterates while the residual keeps dropping; deep wells make
    // the operator ill-conditioned enough that one pass can stall short of
    // the attainable accuracy.
    Vec solve(const Vec& b, double* residual_out = nullptr) const {
        Vec x = lu_.solve(b);
        Vec r = wide_residual(b, x);
        double prev = max_abs(r);
        for (int pass = 0; pass < 3; ++pass) {
            Vec xn = x + lu_.solve(r);
            Vec rn = wide_residual(b, xn);
            double cur = max_abs(rn);
            if (!(cur < prev)) break;
            x = std::move(xn);
            r = std::move(rn);
            prev = cur;
        }
        if (residual_out) *residual_out = prev;
        if (!x.allFinite()) throw NumericalError("linear solve produced non-finite values");
        return x;
    }

private:
    static double max_abs(const Vec& r) {
        double m = 0.0;
        for (Eigen::Index i = 0; i < r.size(); ++i) m = std::max(m, std::abs(r(i)));
        return m;
    }

    Vec wide_residual(const Vec& b, const Vec& x) const {
        const Eigen::Index n = a_.rows();
        Vec r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Wide acc = Wide(b(i));
            for (Eigen::Index j = 0; j < n; ++j) acc -= Wide(a_(i, j)) * Wide(x(j));
            if constexpr (std::is_same_v<Scalar, double>) {
                r(i) = static_cast<double>(acc);
            } else {
                r(i) = Scalar(static_cast<double>(acc.real()), static_cast<double>(acc.imag()));
            }
        }
        return r;
    }

    Mat a_;
    Eigen::PartialPivLU<Mat> lu_;
};

}  // namespace metaspec::detail
