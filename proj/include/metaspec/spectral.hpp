#pragma once

#include <vector>

#include "metaspec/chain.hpp"
#include "metaspec/metastable.hpp"
#include "metaspec/solver.hpp"

namespace metaspec {

// Low-lying spectra of killed (Dirichlet) transition operators and the
// determinant characterization that ties eigenvalues to hitting transforms.

// Principal eigenvalue of (1 - P) with rows/columns at I removed. Refined by
// long double inverse iteration so tiny eigenvalues keep relative accuracy.
// Empty I gives exactly 0; I = all states gives +inf.
double principal_eigenvalue(const ChainModel& chain, const StateSet& I);

struct SpectralReport {
    StateSet I{std::vector<int>{}, 1};
    std::vector<double> eigenvalues;  // ascending
    Eigen::MatrixXd phi;              // n x k, Q-orthonormal, zero on I
    double ortho_error = 0.0;
    double max_residual = 0.0;

    // Filled by low_spectrum_verify when a hierarchy is supplied.
    int j0 = -1;
    int window_count = -1;
    double window_boundary = 0.0;
    double gap_ratio = 0.0;
    bool in_regime = true;
    bool interlacing_ok = true;
    double left_residual = 0.0;

    struct Pairing {
        int j = 0;
        int m = -1;
        double lambda = 0.0;
        double lambda_sigma = 0.0;  // principal eigenvalue with the prefix removed
        double inv_mean = 0.0;      // 1 / E[tau from m to the prefix]
        double dev_sigma = 0.0;
        double dev_mean = 0.0;
        double predicted_scale = 0.0;  // 1/script_T + T_{j+1}/T_j
        double measured_C = 0.0;
        double closure_error = 0.0;  // |G(m -> m avoiding prefix)(u) - 1|
        std::vector<double> phi_at_m;   // |phi_j(m_k)|, k < j, in phi_j(m_j)=1 scale
        double localization_max = 0.0;
        double committor_dev = 0.0;  // sup over the valley of |phi_j - committor|
    };
    std::vector<Pairing> pairing;
};

// Lowest k eigenpairs of (1 - P)^I via the symmetrized dense solve.
SpectralReport dirichlet_spectrum(const ChainModel& chain, const StateSet& I, int k);

struct DetGMatrix {
    StateSet I{std::vector<int>{}, 1};
    StateSet J{std::vector<int>{}, 1};
    double u = 0.0;
    std::vector<int> points;  // J \ I, row/column order
    Eigen::MatrixXd entries;
    double det = 0.0;
};

// Entries delta_{m',m} - G(m' -> m, killed on I u J)(u) over m',m in J \ I.
DetGMatrix det_g(const ChainModel& chain, const StateSet& I, const StateSet& J, double u);

struct DetRoot {
    double lambda = 0.0;
    double u = 0.0;
    Eigen::VectorXd phi;
    double residual = 0.0;      // eigen-equation residual in the Q norm
    double kernel_gap = 0.0;    // second smallest singular value at the root
};

// All roots of det 𝒢 in the admissible window (0, lambda_{I u J}), each turned
// into an eigenvector of (1 - P)^I. With empty I the trivial eigenvalue 0 and
// its constant eigenvector are prepended.
std::vector<DetRoot> eigen_roots_via_detg(const ChainModel& chain, const StateSet& I,
                                          const StateSet& J);

struct DvReport {
    double lambda = 0.0;
    double max_mean_time = 0.0;
    int argmax = -1;
    double product = 0.0;  // lambda * max mean time, always >= 1
};

DvReport dv_bound_check(const ChainModel& chain, const StateSet& J);

struct DualityReport {
    int m = -1;
    double lambda_I = 0.0;
    double u_I = 0.0;
    double mean_time = 0.0;        // E[tau from m to I]
    double product_dev = 0.0;      // |lambda * mean - 1|
    double capacity_form_dev = 0.0;  // |lambda * T_I / R_m - 1|
    double closure_error = 0.0;    // |G(m -> m avoiding I)(u_I) - 1|
    double slope_fd = 0.0;         // finite differences of that transform at u_I
    double slope_solver = 0.0;     // derivative-system route at u_I
    double slope_rel_error = 0.0;
    double restricted_mean = 0.0;  // E[tau(m->m); return beats I], slope at 0
    double linearization_dev = 0.0;  // |restricted_mean * R_m - 1|
    double predicted_scale = 0.0;    // T_{I u m} / T_I
};

// Principal eigenvalue vs mean hitting time from the deepest remaining point.
DualityReport eigen_time_duality(const ChainModel& chain, const StateSet& M, const StateSet& I);

// Full structural check of the low spectrum against a metastable hierarchy:
// counting, pairing, eigenfunction localization and valley committor shape.
SpectralReport low_spectrum_verify(const ChainModel& chain, const Hierarchy& hierarchy);

}  // namespace metaspec
