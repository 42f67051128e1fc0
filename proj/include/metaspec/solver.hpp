#pragma once

#include <complex>
#include <string>
#include <vector>

#include "metaspec/chain.hpp"

namespace metaspec {

// For a target set I and avoid set J the two basic objects are
//   K(x) = E[e^{u sigma_I} ; sigma_I <= sigma_J]   (sigma: first visit, time >= 0)
//   G(x) = E[e^{u tau_I}   ; tau_I   <= tau_J]     (tau: first visit, time >= 1)
// K is 1 on I, 0 on J\I, and solves the killed linear system in the interior;
// G = e^u P K everywhere. They agree off I u J.

struct HittingSolution {
    std::string kind;  // "probability", "laplace", "mean-time"
    StateSet target;
    StateSet avoid;
    std::complex<double> u{0.0, 0.0};
    Eigen::VectorXcd values;
    double residual = 0.0;
    bool trivial = false;       // I u J covered every state; no interior solve
    double cross_check = 0.0;   // mean-time: relative gap between the two routes
    std::vector<int> flagged;   // mean-time: states whose conditioning prob < 1e-14

    Eigen::VectorXd real_values() const { return values.real(); }
};

// sigma-version over all states at real u.
Eigen::VectorXd k_values(const ChainModel& chain, const StateSet& I, const StateSet& J,
                         double u = 0.0, double* residual = nullptr);

// tau-version over all states at real u.
Eigen::VectorXd g_values(const ChainModel& chain, const StateSet& I, const StateSet& J,
                         double u = 0.0, double* residual = nullptr);

// K, G and their u-derivatives at real u in one pass (two solves sharing a
// factorization).
struct LaplaceFamily {
    Eigen::VectorXd K, G, dK, dG;
    double residual = 0.0;
};
LaplaceFamily laplace_family(const ChainModel& chain, const StateSet& I, const StateSet& J,
                             double u = 0.0);

// Columns are K_{{a},A}(u) for each a in A (in member order): the chance,
// weighted by e^{u sigma}, that the first visit to A happens at a. One
// factorization, |A| right-hand sides.
Eigen::MatrixXd absorption_matrix(const ChainModel& chain, const StateSet& A, double u = 0.0,
                                  double* residual = nullptr);

// Largest real u0 such that the transforms for killed set A converge for
// Re(u) < u0; equals -log(spectral radius of P restricted to A^c).
// +infinity when A covers every state.
double laplace_abscissa(const ChainModel& chain, const StateSet& A);

// P[sigma_I <= sigma_J] per state (K at u=0).
HittingSolution hitting_probability(const ChainModel& chain, const StateSet& I,
                                    const StateSet& J);

// P[tau_I < tau_x] for the start x itself; x must lie outside I. Equals
// capacity(x, I)/Q(x) and 1/T_{x,I}.
double escape_probability(const ChainModel& chain, int x, const StateSet& I);

// G at complex u (|Im u| <= pi), guarded against the convergence abscissa.
HittingSolution laplace_transform(const ChainModel& chain, const StateSet& I, const StateSet& J,
                                  std::complex<double> u);

// E[tau_I | tau_I <= tau_J] per state, cross-checked against the Green-kernel
// representation on the interior (relative 1e-8, else NumericalError).
HittingSolution mean_time_conditioned(const ChainModel& chain, const StateSet& I,
                                      const StateSet& J);

// Laplace transform at a single start state by forward propagation of the
// killed chain, truncated once a geometric tail bound falls below tail_tol
// (relative to the accumulated value). Deliberately avoids the linear-solve
// route so the two can be compared.
double laplace_series(const ChainModel& chain, const StateSet& I, const StateSet& J, int x,
                      double u, double tail_tol = 1e-10, long max_steps = 4000000);

enum class GreenMethod { DirectInverse, HittingFormula };

// Green kernel of the walk killed outside Omega, plus the exit-location
// probabilities P[tau_y = tau_{Omega^c}] on the outer boundary.
struct GreenMatrix {
    StateSet domain;               // Omega, row/column order = members()
    StateSet bnd;                  // outer boundary of Omega
    Eigen::MatrixXd values;        // |Omega| x |Omega|
    Eigen::MatrixXd exit_values;   // |Omega| x |bnd|
    GreenMethod method;
    double symmetry_rel_error = 0.0;  // worst relative defect of Q(x)G(x,y)=Q(y)G(y,x)
};
GreenMatrix greens_function(const ChainModel& chain, const StateSet& omega, GreenMethod method);

// The ratio comparing escape statistics of x and y within Omega; lies in
// [1/3, 3] and satisfies delta(x,y) delta(y,x) = 1.
double delta_factor(const ChainModel& chain, const StateSet& omega, int x, int y);

// Residuals (mixed absolute/relative, denominator max(|a|,|b|,1)) of the
// identity suite evaluated from independent solves:
//   strong_markov    splitting G through an intermediate set L
//   one_step         G = e^u P K against the propagated-series route
//   derivative       (1 - e^u P) dK = G, dK from its own solve
//   derivative_fd    dK against centered finite differences (coarser route)
//   renewal          G_{y,I} = G_{y,I+x} / (1 - G_{x,I+y}) at x
//   reversibility    Q(x) G^x_{y,I+x} = Q(y) G^y_{x,I+y}
struct IdentityReport {
    double strong_markov = 0.0;
    double one_step = 0.0;
    double derivative = 0.0;
    double derivative_fd = 0.0;
    double renewal = 0.0;
    double reversibility = 0.0;
    double linear_residual = 0.0;

    // Everything except the finite-difference route, which is honest only to
    // about 1e-4 and is asserted separately.
    double max_identity_residual() const;
};
IdentityReport verify_identities(const ChainModel& chain, const StateSet& I, const StateSet& J,
                                 const StateSet& L, double u);

}  // namespace metaspec
