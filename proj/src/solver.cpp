#include "metaspec/solver.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "linsolve.hpp"

namespace metaspec {

namespace {

constexpr double kConditionFloor = 1e-14;
constexpr double kMeanCrossTol = 1e-8;

// Largest admissible Re(u): a hair below the abscissa, with the margin scaled
// down when the abscissa itself is tiny (deep traps at low temperature).
double abscissa_limit(double u0) {
    if (std::isinf(u0)) return u0;
    return u0 - 1e-9 * std::min(u0, 1.0);
}

double mixed_rel(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

void check_universe(const ChainModel& chain, const StateSet& s) {
    if (s.universe() != chain.n) throw InputError("state set universe does not match the chain");
}

// Killed linear system (Id - e^u P) on the complement of A.
struct KilledSystem {
    std::vector<int> interior;
    double eu = 1.0;
    std::unique_ptr<detail::RefinedLU<double>> lu;

    int dim() const { return static_cast<int>(interior.size()); }
};

KilledSystem build_system(const ChainModel& chain, const StateSet& A, double u) {
    KilledSystem sys;
    sys.interior = A.complement().members();
    sys.eu = std::exp(u);
    const int m = sys.dim();
    if (m > 0) {
        Eigen::MatrixXd M(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                M(a, b) = (a == b ? 1.0 : 0.0) -
                          sys.eu * chain.P(sys.interior[static_cast<size_t>(a)],
                                           sys.interior[static_cast<size_t>(b)]);
        sys.lu = std::make_unique<detail::RefinedLU<double>>(std::move(M));
    }
    return sys;
}

// K_{I,*}(u) given the factored system for A = I u J: 1 on I, 0 on A\I,
// interior from the solve.
Eigen::VectorXd solve_k(const ChainModel& chain, const KilledSystem& sys, const StateSet& I,
                        double* residual) {
    Eigen::VectorXd k = Eigen::VectorXd::Zero(chain.n);
    for (int x : I.members()) k(x) = 1.0;
    const int m = sys.dim();
    if (m > 0 && !I.isEmpty()) {
        Eigen::VectorXd rhs(m);
        for (int a = 0; a < m; ++a) {
            double s = 0.0;
            for (int y : I.members()) s += chain.P(sys.interior[static_cast<size_t>(a)], y);
            rhs(a) = sys.eu * s;
        }
        double res = 0.0;
        Eigen::VectorXd sol = sys.lu->solve(rhs, &res);
        if (residual) *residual = std::max(*residual, res);
        for (int a = 0; a < m; ++a) k(sys.interior[static_cast<size_t>(a)]) = sol(a);
    }
    return k;
}

Eigen::VectorXd one_step(const ChainModel& chain, double eu, const Eigen::VectorXd& k) {
    return eu * (chain.P * k);
}

// G for a possibly empty target (empty target has transform identically 0).
Eigen::VectorXd g_values_or_zero(const ChainModel& chain, const StateSet& I, const StateSet& J,
                                 double u, double* residual) {
    if (I.isEmpty()) return Eigen::VectorXd::Zero(chain.n);
    return g_values(chain, I, J, u, residual);
}

}  // namespace

double IdentityReport::max_identity_residual() const {
    return std::max({strong_markov, one_step, derivative, renewal, reversibility});
}

Eigen::VectorXd k_values(const ChainModel& chain, const StateSet& I, const StateSet& J, double u,
                         double* residual) {
    check_universe(chain, I);
    check_universe(chain, J);
    if (I.isEmpty()) throw InputError("target set must be nonempty");
    KilledSystem sys = build_system(chain, I.unite(J), u);
    return solve_k(chain, sys, I, residual);
}

Eigen::VectorXd g_values(const ChainModel& chain, const StateSet& I, const StateSet& J, double u,
                         double* residual) {
    Eigen::VectorXd k = k_values(chain, I, J, u, residual);
    return one_step(chain, std::exp(u), k);
}

LaplaceFamily laplace_family(const ChainModel& chain, const StateSet& I, const StateSet& J,
                             double u) {
    check_universe(chain, I);
    check_universe(chain, J);
    if (I.isEmpty()) throw InputError("target set must be nonempty");
    const StateSet A = I.unite(J);
    KilledSystem sys = build_system(chain, A, u);
    LaplaceFamily fam;
    fam.K = solve_k(chain, sys, I, &fam.residual);
    fam.G = one_step(chain, sys.eu, fam.K);
    // dK solves the same system with the transform itself as source; boundary
    // derivative values are 0 because K is constant there.
    fam.dK = Eigen::VectorXd::Zero(chain.n);
    const int m = sys.dim();
    if (m > 0) {
        Eigen::VectorXd rhs(m);
        for (int a = 0; a < m; ++a) rhs(a) = fam.G(sys.interior[static_cast<size_t>(a)]);
        double res = 0.0;
        Eigen::VectorXd w = sys.lu->solve(rhs, &res);
        fam.residual = std::max(fam.residual, res);
        for (int a = 0; a < m; ++a) fam.dK(sys.interior[static_cast<size_t>(a)]) = w(a);
    }
    fam.dG = fam.G + one_step(chain, sys.eu, fam.dK);
    return fam;
}

Eigen::MatrixXd absorption_matrix(const ChainModel& chain, const StateSet& A, double u,
                                  double* residual) {
    check_universe(chain, A);
    if (A.isEmpty()) throw InputError("absorbing set must be nonempty");
    KilledSystem sys = build_system(chain, A, u);
    const int m = sys.dim();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(chain.n, A.size());
    for (int col = 0; col < A.size(); ++col) {
        int a = A.members()[static_cast<size_t>(col)];
        H(a, col) = 1.0;
        if (m == 0) continue;
        Eigen::VectorXd rhs(m);
        for (int i = 0; i < m; ++i)
            rhs(i) = sys.eu * chain.P(sys.interior[static_cast<size_t>(i)], a);
        double res = 0.0;
        Eigen::VectorXd sol = sys.lu->solve(rhs, &res);
        if (residual) *residual = std::max(*residual, res);
        for (int i = 0; i < m; ++i) H(sys.interior[static_cast<size_t>(i)], col) = sol(i);
    }
    return H;
}

double laplace_abscissa(const ChainModel& chain, const StateSet& A) {
    check_universe(chain, A);
    if (A.size() == chain.n) return std::numeric_limits<double>::infinity();
    if (A.isEmpty()) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized_dirichlet(chain, A),
                                                      Eigen::EigenvaluesOnly);
    double lambda = es.eigenvalues()(0);
    double radius = 1.0 - lambda;
    if (radius <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(radius);
}

HittingSolution hitting_probability(const ChainModel& chain, const StateSet& I,
                                    const StateSet& J) {
    HittingSolution sol;
    sol.kind = "probability";
    sol.target = I;
    sol.avoid = J;
    sol.u = 0.0;
    Eigen::VectorXd k = k_values(chain, I, J, 0.0, &sol.residual);
    sol.trivial = (I.unite(J).size() == chain.n);
    sol.values = k.cast<std::complex<double>>();
    return sol;
}

double escape_probability(const ChainModel& chain, int x, const StateSet& I) {
    check_universe(chain, I);
    if (x < 0 || x >= chain.n) throw InputError("state index out of range");
    if (I.contains(x)) throw InputError("escape start state lies inside the target set");
    if (I.isEmpty()) throw InputError("target set must be nonempty");
    Eigen::VectorXd k = k_values(chain, I, StateSet::single(x, chain.n), 0.0);
    return chain.P.row(x).dot(k);
}

HittingSolution laplace_transform(const ChainModel& chain, const StateSet& I, const StateSet& J,
                                  std::complex<double> u) {
    check_universe(chain, I);
    check_universe(chain, J);
    if (I.isEmpty()) throw InputError("target set must be nonempty");
    if (std::abs(u.imag()) > 3.14159265358979323846 + 1e-12)
        throw InputError("imaginary part of u must lie within [-pi, pi]");
    const StateSet A = I.unite(J);
    double u0 = laplace_abscissa(chain, A);
    if (u.real() > abscissa_limit(u0)) {
        double lambda = 1.0 - std::exp(-u0);
        throw DomainError("Re(u) = " + std::to_string(u.real()) +
                          " at or beyond the convergence abscissa " + std::to_string(u0) +
                          " (principal Dirichlet eigenvalue " + std::to_string(lambda) + ")");
    }

    HittingSolution sol;
    sol.kind = "laplace";
    sol.target = I;
    sol.avoid = J;
    sol.u = u;
    sol.trivial = (A.size() == chain.n);

    const std::complex<double> eu = std::exp(u);
    std::vector<int> interior = A.complement().members();
    const int m = static_cast<int>(interior.size());
    Eigen::VectorXcd k = Eigen::VectorXcd::Zero(chain.n);
    for (int x : I.members()) k(x) = 1.0;
    if (m > 0) {
        Eigen::MatrixXcd M(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                M(a, b) = (a == b ? 1.0 : 0.0) -
                          eu * chain.P(interior[static_cast<size_t>(a)],
                                       interior[static_cast<size_t>(b)]);
        Eigen::VectorXcd rhs(m);
        for (int a = 0; a < m; ++a) {
            double s = 0.0;
            for (int y : I.members()) s += chain.P(interior[static_cast<size_t>(a)], y);
            rhs(a) = eu * s;
        }
        detail::RefinedLU<std::complex<double>> lu(std::move(M));
        Eigen::VectorXcd sol_int = lu.solve(rhs, &sol.residual);
        for (int a = 0; a < m; ++a) k(interior[static_cast<size_t>(a)]) = sol_int(a);
    }
    sol.values = eu * (chain.P * k);
    return sol;
}

HittingSolution mean_time_conditioned(const ChainModel& chain, const StateSet& I,
                                      const StateSet& J) {
    LaplaceFamily fam = laplace_family(chain, I, J, 0.0);
    HittingSolution sol;
    sol.kind = "mean-time";
    sol.target = I;
    sol.avoid = J;
    sol.u = 0.0;
    sol.residual = fam.residual;
    const StateSet A = I.unite(J);
    sol.trivial = (A.size() == chain.n);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(chain.n);
    for (int x = 0; x < chain.n; ++x) {
        if (fam.G(x) < kConditionFloor) {
            sol.flagged.push_back(x);
        } else {
            mean(x) = fam.dG(x) / fam.G(x);
        }
    }
    sol.values = mean.cast<std::complex<double>>();

    // Second route through the Green kernel of the domain (I u J)^c:
    // E[tau_I | tau_I <= tau_J](x) = sum_y Green(x,y) h(y) / h(x) with
    // h = P[tau_I <= tau_J].
    std::vector<int> interior = A.complement().members();
    const int m = static_cast<int>(interior.size());
    if (m > 0) {
        KilledSystem sys = build_system(chain, A, 0.0);
        Eigen::VectorXd h(m), weighted(m);
        for (int i = 0; i < m; ++i) h(i) = fam.K(interior[static_cast<size_t>(i)]);
        weighted = sys.lu->solve(h, nullptr);
        for (int i = 0; i < m; ++i) {
            int x = interior[static_cast<size_t>(i)];
            if (fam.G(x) < kConditionFloor) continue;
            double via_green = weighted(i) / h(i);
            sol.cross_check = std::max(sol.cross_check, mixed_rel(mean(x), via_green));
        }
        if (sol.cross_check > kMeanCrossTol) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.3e", sol.cross_check);
            throw NumericalError(std::string("conditioned mean-time routes disagree (relative gap ") +
                                 buf + ")");
        }
    }
    return sol;
}

double laplace_series(const ChainModel& chain, const StateSet& I, const StateSet& J, int x,
                      double u, double tail_tol, long max_steps) {
    check_universe(chain, I);
    check_universe(chain, J);
    if (I.isEmpty()) throw InputError("target set must be nonempty");
    if (x < 0 || x >= chain.n) throw InputError("state index out of range");
    const StateSet A = I.unite(J);
    const double eu = std::exp(u);
    // Rigorous tail control: in the measure-weighted norm the killed kernel
    // contracts by exactly its spectral radius per step.
    double r = std::exp(-laplace_abscissa(chain, A));
    if (eu * r >= 1.0) throw DomainError("series does not converge at this u");

    std::vector<int> interior = A.complement().members();
    const int m = static_cast<int>(interior.size());
    Eigen::VectorXd credit(chain.n);
    for (int z = 0; z < chain.n; ++z) {
        double s = 0.0;
        for (int y : I.members()) s += chain.P(z, y);
        credit(z) = s;
    }
    Eigen::MatrixXd Pt(m, m);
    Eigen::VectorXd cr(m), qroot(m);
    for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b)
            Pt(a, b) = chain.P(interior[static_cast<size_t>(b)], interior[static_cast<size_t>(a)]);
        cr(a) = credit(interior[static_cast<size_t>(a)]);
        qroot(a) = std::sqrt(chain.Q(interior[static_cast<size_t>(a)]));
    }
    double c2 = 0.0;
    for (int a = 0; a < m; ++a) c2 += chain.Q(interior[static_cast<size_t>(a)]) * cr(a) * cr(a);
    c2 = std::sqrt(c2);

    double total = eu * credit(x);
    if (m == 0) return total;
    Eigen::VectorXd w(m);
    for (int a = 0; a < m; ++a) w(a) = chain.P(x, interior[static_cast<size_t>(a)]);

    double factor = eu;
    for (long t = 2; t <= max_steps; ++t) {
        factor *= eu;
        total += factor * w.dot(cr);
        w = Pt * w;
        // ||v||_2 with v = w / sqrt(Q) decays by r per step from here on.
        double vnorm = 0.0;
        for (int a = 0; a < m; ++a) {
            double v = w(a) / qroot(a);
            vnorm += v * v;
        }
        vnorm = std::sqrt(vnorm);
        double tail = c2 * vnorm * factor * eu / (1.0 - eu * r);
        if (tail <= tail_tol * std::max(1.0, std::abs(total))) return total;
    }
    throw NumericalError("transform series did not meet its tail bound within the step cap");
}

GreenMatrix greens_function(const ChainModel& chain, const StateSet& omega, GreenMethod method) {
    check_universe(chain, omega);
    if (omega.isEmpty()) throw InputError("domain must be nonempty");
    if (omega.size() == chain.n) throw InputError("domain complement is empty; nothing kills the walk");

    GreenMatrix g;
    g.domain = omega;
    g.bnd = boundary(chain, omega);
    g.method = method;
    const StateSet oc = omega.complement();
    const std::vector<int>& dom = omega.members();
    const int nd = omega.size();
    g.values.resize(nd, nd);
    g.exit_values.resize(nd, g.bnd.size());

    if (method == GreenMethod::DirectInverse) {
        KilledSystem sys = build_system(chain, oc, 0.0);
        // interior order equals domain order: both are sorted member lists
        Eigen::MatrixXd id = Eigen::MatrixXd::Identity(nd, nd);
        for (int col = 0; col < nd; ++col) g.values.col(col) = sys.lu->solve(id.col(col), nullptr);
        for (int j = 0; j < g.bnd.size(); ++j) {
            int y = g.bnd.members()[static_cast<size_t>(j)];
            Eigen::VectorXd rhs(nd);
            for (int i = 0; i < nd; ++i) rhs(i) = chain.P(dom[static_cast<size_t>(i)], y);
            g.exit_values.col(j) = sys.lu->solve(rhs, nullptr);
        }
    } else {
        for (int a = 0; a < nd; ++a) {
            int x = dom[static_cast<size_t>(a)];
            StateSet xs = StateSet::single(x, chain.n);
            KilledSystem sys = build_system(chain, oc.unite(xs), 0.0);
            Eigen::VectorXd k_to_x = solve_k(chain, sys, xs, nullptr);
            Eigen::VectorXd k_out = solve_k(chain, sys, oc, nullptr);
            double esc = chain.P.row(x).dot(k_out);
            if (esc <= 0.0) throw NumericalError("vanishing escape probability in Green assembly");
            for (int b = 0; b < nd; ++b) {
                int y = dom[static_cast<size_t>(b)];
                g.values(a, b) = chain.Q(y) / chain.Q(x) * k_to_x(y) / esc;
            }
            for (int j = 0; j < g.bnd.size(); ++j) {
                int y = g.bnd.members()[static_cast<size_t>(j)];
                double g_from_y = chain.P.row(y).dot(k_to_x);
                g.exit_values(a, j) = chain.Q(y) / chain.Q(x) * g_from_y / esc;
            }
        }
    }

    for (int a = 0; a < nd; ++a) {
        for (int b = a + 1; b < nd; ++b) {
            double lhs = chain.Q(dom[static_cast<size_t>(a)]) * g.values(a, b);
            double rhs = chain.Q(dom[static_cast<size_t>(b)]) * g.values(b, a);
            double denom = std::max(std::abs(lhs), std::abs(rhs));
            if (denom > 0.0)
                g.symmetry_rel_error = std::max(g.symmetry_rel_error, std::abs(lhs - rhs) / denom);
        }
    }
    return g;
}

double delta_factor(const ChainModel& chain, const StateSet& omega, int x, int y) {
    check_universe(chain, omega);
    if (!omega.contains(x) || !omega.contains(y))
        throw InputError("delta factor arguments must lie in the domain");
    if (x == y) return 1.0;
    const StateSet oc = omega.complement();
    const StateSet ocy = oc.unite(StateSet::single(y, chain.n));
    const StateSet ocx = oc.unite(StateSet::single(x, chain.n));
    double e_y_out = escape_probability(chain, y, oc);
    double e_x_outy = escape_probability(chain, x, ocy);
    double e_x_out = escape_probability(chain, x, oc);
    double e_y_outx = escape_probability(chain, y, ocx);
    if (e_x_out <= 0.0 || e_y_outx <= 0.0)
        throw NumericalError("degenerate escape probability in delta factor");
    return (e_y_out * e_x_outy) / (e_x_out * e_y_outx);
}

IdentityReport verify_identities(const ChainModel& chain, const StateSet& I, const StateSet& J,
                                 const StateSet& L, double u) {
    check_universe(chain, I);
    check_universe(chain, J);
    check_universe(chain, L);
    if (I.isEmpty()) throw InputError("target set must be nonempty");
    const StateSet A = I.unite(J);
    double u0 = laplace_abscissa(chain, A);
    if (u > abscissa_limit(u0))
        throw DomainError("u beyond the convergence abscissa " + std::to_string(u0));

    IdentityReport rep;
    LaplaceFamily fam = laplace_family(chain, I, J, u);
    rep.linear_residual = fam.residual;
    const double eu = std::exp(u);
    const StateSet interior_set = A.complement();
    const StateSet j_only = J.minus(I);

    // Splitting through L: G_{I,J} = G_{I\L, J u L} + sum_{y in L} G_{y, IuJuL} K_{I,J}(y).
    {
        const StateSet IJL = A.unite(L);
        Eigen::VectorXd split = g_values_or_zero(chain, I.minus(L), J.unite(L), u, nullptr);
        Eigen::MatrixXd H = absorption_matrix(chain, IJL, u, nullptr);
        Eigen::VectorXd rhs = split;
        for (int j = 0; j < IJL.size(); ++j) {
            int y = IJL.members()[static_cast<size_t>(j)];
            if (!L.contains(y)) continue;
            Eigen::VectorXd gy = eu * (chain.P * H.col(j));
            rhs += gy * fam.K(y);
        }
        for (int x = 0; x < chain.n; ++x)
            rep.strong_markov = std::max(rep.strong_markov, mixed_rel(fam.G(x), rhs(x)));
    }

    // One-step identity against the propagated-series route at a handful of
    // deterministic probe states.
    {
        std::vector<int> probes;
        for (int x : interior_set.members()) {
            probes.push_back(x);
            if (probes.size() >= 4) break;
        }
        for (int x : I.members()) {
            probes.push_back(x);
            if (probes.size() >= 6) break;
        }
        for (int x : j_only.members()) {
            probes.push_back(x);
            if (probes.size() >= 8) break;
        }
        for (int x : probes) {
            double series = laplace_series(chain, I, J, x, u);
            rep.one_step = std::max(rep.one_step, mixed_rel(fam.G(x), series));
        }
    }

    // Derivative system evaluated with a fresh matrix-vector product.
    {
        Eigen::VectorXd lhs = fam.dK - eu * (chain.P * fam.dK);
        for (int x : interior_set.members())
            rep.derivative = std::max(rep.derivative, mixed_rel(lhs(x), fam.G(x)));
    }

    // Centered finite differences of K in u (coarse independent route).
    {
        double h = 1e-6 * std::min(u0, 1e3);
        if (u + 2.0 * h > abscissa_limit(u0)) h = (abscissa_limit(u0) - u) / 4.0;
        if (h > 0.0) {
            Eigen::VectorXd kp = k_values(chain, I, J, u + h);
            Eigen::VectorXd km = k_values(chain, I, J, u - h);
            for (int x : interior_set.members()) {
                double fd = (kp(x) - km(x)) / (2.0 * h);
                rep.derivative_fd = std::max(rep.derivative_fd, mixed_rel(fd, fam.dK(x)));
            }
        }
    }

    // Renewal and reversibility need their own, smaller killed sets, so the
    // argument u may sit beyond their abscissas; fall back to half of those.
    {
        int y = -1;
        for (const StateSet* cand : {&L, &J}) {
            for (int z : cand->members())
                if (!I.contains(z)) {
                    y = z;
                    break;
                }
            if (y >= 0) break;
        }
        if (y < 0)
            for (int z = 0; z < chain.n; ++z)
                if (!I.contains(z)) {
                    y = z;
                    break;
                }
        if (y < 0) return rep;  // I covers the whole space; nothing to renew against
        StateSet ys = StateSet::single(y, chain.n);
        double ur = u;
        double u0r = laplace_abscissa(chain, I.unite(ys));
        if (ur > 0.5 * u0r) ur = 0.5 * u0r;
        Eigen::VectorXd lhs = g_values(chain, ys, I, ur);
        int checked = 0;
        for (int x = 0; x < chain.n && checked < 8; ++x) {
            if (I.contains(x) || x == y) continue;
            StateSet xs = StateSet::single(x, chain.n);
            double num = g_values(chain, ys, I.unite(xs), ur)(x);
            double den = g_values(chain, xs, I.unite(ys), ur)(x);
            rep.renewal = std::max(rep.renewal, mixed_rel(lhs(x), num / (1.0 - den)));
            ++checked;
        }

        checked = 0;
        for (int a = 0; a < chain.n && checked < 8; ++a) {
            if (I.contains(a)) continue;
            for (int b = a + 1; b < chain.n && checked < 8; ++b) {
                if (I.contains(b)) continue;
                StateSet as = StateSet::single(a, chain.n);
                StateSet bs = StateSet::single(b, chain.n);
                double up = u;
                double u0p = laplace_abscissa(chain, I.unite(as).unite(bs));
                if (up > 0.5 * u0p) up = 0.5 * u0p;
                double left = chain.Q(a) * g_values(chain, bs, I.unite(as), up)(a);
                double right = chain.Q(b) * g_values(chain, as, I.unite(bs), up)(b);
                rep.reversibility = std::max(rep.reversibility, mixed_rel(left, right));
                ++checked;
            }
        }
    }
    return rep;
}

}  // namespace metaspec
