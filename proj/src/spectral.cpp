#include "metaspec/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace metaspec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DenseSpectrum {
    std::vector<int> interior;
    Eigen::VectorXd evals;
    Eigen::MatrixXd psi;  // unit columns in symmetrized coordinates
};

DenseSpectrum dense_spectrum(const ChainModel& chain, const StateSet& I) {
    DenseSpectrum sp;
    sp.interior = I.complement().members();
    if (sp.interior.empty()) return sp;
    Eigen::MatrixXd S = symmetrized_dirichlet(chain, I);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolve failed to converge");
    sp.evals = es.eigenvalues();
    sp.psi = es.eigenvectors();
    return sp;
}

// psi (symmetrized) -> phi with phi = psi / sqrt(Q), zero on the killed set,
// unit Q-norm, first significant entry positive.
Eigen::VectorXd lift_vector(const ChainModel& chain, const std::vector<int>& interior,
                            const Eigen::VectorXd& psi) {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(chain.n);
    for (size_t a = 0; a < interior.size(); ++a)
        phi(interior[a]) = psi(static_cast<Eigen::Index>(a)) / std::sqrt(chain.Q(interior[a]));
    double norm2 = 0.0;
    for (int x = 0; x < chain.n; ++x) norm2 += chain.Q(x) * phi(x) * phi(x);
    phi /= std::sqrt(norm2);
    double big = phi.cwiseAbs().maxCoeff();
    for (int x = 0; x < chain.n; ++x) {
        if (std::abs(phi(x)) > 1e-12 * big) {
            if (phi(x) < 0.0) phi = -phi;
            break;
        }
    }
    return phi;
}

double q_norm(const ChainModel& chain, const Eigen::VectorXd& v) {
    double s = 0.0;
    for (int x = 0; x < chain.n; ++x) s += chain.Q(x) * v(x) * v(x);
    return std::sqrt(s);
}

double q_dot(const ChainModel& chain, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double s = 0.0;
    for (int x = 0; x < chain.n; ++x) s += chain.Q(x) * a(x) * b(x);
    return s;
}

// (1 - P)^I phi for phi vanishing on I.
Eigen::VectorXd apply_killed(const ChainModel& chain, const StateSet& I,
                             const Eigen::VectorXd& phi) {
    Eigen::VectorXd r = phi - chain.P * phi;
    for (int x : I.members()) r(x) = 0.0;
    return r;
}

double real_g_at(const ChainModel& chain, const StateSet& target, const StateSet& avoid, double u,
                 int x) {
    return g_values(chain, target, avoid, u).coeff(x);
}

}  // namespace

double principal_eigenvalue(const ChainModel& chain, const StateSet& I) {
    if (I.universe() != chain.n) throw InputError("state set universe does not match the chain");
    if (I.isEmpty()) return 0.0;
    if (I.size() == chain.n) return kInf;

    Eigen::MatrixXd S = symmetrized_dirichlet(chain, I);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolve failed to converge");
    double lambda = es.eigenvalues()(0);

    // Inverse iteration in extended precision recovers relative accuracy when
    // the principal eigenvalue is many orders below the spectral norm.
    using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    LMat Sl = S.cast<long double>();
    Eigen::PartialPivLU<LMat> lu(Sl);
    LVec z = es.eigenvectors().col(0).cast<long double>();
    long double rho = lambda;
    for (int it = 0; it < 60; ++it) {
        LVec w = lu.solve(z);
        if (!w.allFinite()) break;
        w /= w.norm();
        long double next = w.dot(Sl * w);
        z = w;
        bool settled = std::abs((double)(next - rho)) <=
                       1e-17 * std::max(std::abs((double)next), 1e-300);
        rho = next;
        if (settled) break;
    }
    if (rho > 0.0 && std::isfinite((double)rho)) lambda = (double)rho;
    return lambda;
}

SpectralReport dirichlet_spectrum(const ChainModel& chain, const StateSet& I, int k) {
    if (I.universe() != chain.n) throw InputError("state set universe does not match the chain");
    DenseSpectrum sp = dense_spectrum(chain, I);
    const int dim = static_cast<int>(sp.interior.size());
    if (k < 1 || k > dim) throw InputError("requested eigenpair count exceeds the interior size");

    SpectralReport rep;
    rep.I = I;
    rep.phi = Eigen::MatrixXd::Zero(chain.n, k);
    for (int j = 0; j < k; ++j) {
        rep.eigenvalues.push_back(sp.evals(j));
        rep.phi.col(j) = lift_vector(chain, sp.interior, sp.psi.col(j));
        Eigen::VectorXd r =
            apply_killed(chain, I, rep.phi.col(j)) - sp.evals(j) * rep.phi.col(j);
        rep.max_residual = std::max(rep.max_residual, q_norm(chain, r));
    }
    for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) {
            double g = q_dot(chain, rep.phi.col(a), rep.phi.col(b)) - (a == b ? 1.0 : 0.0);
            rep.ortho_error = std::max(rep.ortho_error, std::abs(g));
        }
    return rep;
}

DetGMatrix det_g(const ChainModel& chain, const StateSet& I, const StateSet& J, double u) {
    DetGMatrix dg;
    dg.I = I;
    dg.J = J;
    dg.u = u;
    dg.points = J.minus(I).members();
    const int k = static_cast<int>(dg.points.size());
    if (k == 0) throw InputError("J must contain at least one point outside I");
    const StateSet A = I.unite(J);
    double u0 = laplace_abscissa(chain, A);
    if (!std::isinf(u0) && u > u0 - 1e-12 * std::min(u0, 1.0))
        throw DomainError("u beyond the convergence abscissa " + std::to_string(u0) +
                          " (principal Dirichlet eigenvalue " +
                          std::to_string(1.0 - std::exp(-u0)) + ")");

    dg.entries.resize(k, k);
    for (int b = 0; b < k; ++b) {
        StateSet target = StateSet::single(dg.points[static_cast<size_t>(b)], chain.n);
        Eigen::VectorXd g = g_values(chain, target, A.minus(target), u);
        for (int a = 0; a < k; ++a)
            dg.entries(a, b) =
                (a == b ? 1.0 : 0.0) - g(dg.points[static_cast<size_t>(a)]);
    }
    dg.det = dg.entries.determinant();
    return dg;
}

std::vector<DetRoot> eigen_roots_via_detg(const ChainModel& chain, const StateSet& I,
                                          const StateSet& J) {
    const StateSet A = I.unite(J);
    const std::vector<int> points = J.minus(I).members();
    if (points.empty()) throw InputError("J must contain at least one point outside I");

    std::vector<DetRoot> roots;
    if (I.isEmpty()) {
        DetRoot zero;
        zero.lambda = 0.0;
        zero.u = 0.0;
        zero.phi = Eigen::VectorXd::Ones(chain.n);
        zero.residual = q_norm(chain, apply_killed(chain, I, zero.phi));
        zero.kernel_gap = 0.0;
        roots.push_back(std::move(zero));
    }

    double u0 = laplace_abscissa(chain, A);
    double lambda_cap = std::isinf(u0) ? 1.0 : 1.0 - std::exp(-u0);
    double lambda_hi = 0.999 * lambda_cap;

    // Window seeded by a coarse eigensolve; the det evaluations below remain an
    // independent route to the same numbers.
    DenseSpectrum sp = dense_spectrum(chain, I);
    double lambda_seed = 0.0;
    for (Eigen::Index i = 0; i < sp.evals.size(); ++i)
        if (sp.evals(i) > 1e-14) {
            lambda_seed = sp.evals(i);
            break;
        }
    double lambda_lo = lambda_seed > 0.0 ? 1e-3 * lambda_seed : 1e-9 * lambda_hi;
    lambda_lo = std::min(lambda_lo, 1e-3 * lambda_hi);

    auto to_u = [](double lam) { return -std::log1p(-lam); };
    auto det_at = [&](double u) { return det_g(chain, I, J, u).det; };

    const int grid_n = 400;
    std::vector<double> us(grid_n), dets(grid_n);
    double lr = std::log(lambda_hi / lambda_lo);
    for (int i = 0; i < grid_n; ++i) {
        double lam = lambda_lo * std::exp(lr * i / (grid_n - 1));
        us[static_cast<size_t>(i)] = to_u(lam);
        dets[static_cast<size_t>(i)] = det_at(us[static_cast<size_t>(i)]);
    }

    std::vector<std::pair<double, double>> brackets;
    auto scan = [&](const std::vector<double>& uu, const std::vector<double>& dd) {
        for (size_t i = 0; i + 1 < uu.size(); ++i)
            if ((dd[i] < 0.0) != (dd[i + 1] < 0.0)) brackets.emplace_back(uu[i], uu[i + 1]);
    };
    scan(us, dets);
    // A sharp dip without a sign change can hide a close root pair; rescan the
    // neighborhood on a finer grid.
    for (size_t i = 1; i + 1 < us.size(); ++i) {
        bool dip = std::abs(dets[i]) < 1e-2 * std::abs(dets[i - 1]) &&
                   std::abs(dets[i]) < 1e-2 * std::abs(dets[i + 1]);
        bool flanked = (dets[i - 1] < 0.0) == (dets[i] < 0.0) &&
                       (dets[i] < 0.0) == (dets[i + 1] < 0.0);
        if (!dip || !flanked) continue;
        std::vector<double> fu(65), fd(65);
        for (int t = 0; t <= 64; ++t) {
            fu[static_cast<size_t>(t)] = us[i - 1] + (us[i + 1] - us[i - 1]) * t / 64.0;
            fd[static_cast<size_t>(t)] = det_at(fu[static_cast<size_t>(t)]);
        }
        scan(fu, fd);
    }

    for (auto [a, b] : brackets) {
        double fa = det_at(a);
        while (b - a > 1e-12 * std::max(std::abs(b), 1e-300)) {
            double mid = 0.5 * (a + b);
            double fm = det_at(mid);
            if (fm == 0.0) {
                a = b = mid;
                break;
            }
            if ((fm < 0.0) == (fa < 0.0)) {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        double u_root = 0.5 * (a + b);

        DetRoot root;
        root.u = u_root;
        root.lambda = -std::expm1(-u_root);
        DetGMatrix dg = det_g(chain, I, J, u_root);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(dg.entries, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        Eigen::Index last = sv.size() - 1;
        root.kernel_gap = last > 0 ? sv(last - 1) : kInf;
        if (last > 0 && sv(last - 1) <= 1e-6 * sv(0))
            throw DegeneracyError("determinant kernel at the located root is not one-dimensional");
        Eigen::VectorXd v = svd.matrixV().col(last);

        Eigen::VectorXd phi = Eigen::VectorXd::Zero(chain.n);
        for (size_t b_idx = 0; b_idx < dg.points.size(); ++b_idx) {
            StateSet target = StateSet::single(dg.points[b_idx], chain.n);
            phi += v(static_cast<Eigen::Index>(b_idx)) *
                   k_values(chain, target, A.minus(target), u_root);
        }
        phi /= q_norm(chain, phi);
        double big = phi.cwiseAbs().maxCoeff();
        for (int x = 0; x < chain.n; ++x) {
            if (std::abs(phi(x)) > 1e-12 * big) {
                if (phi(x) < 0.0) phi = -phi;
                break;
            }
        }
        root.phi = phi;
        Eigen::VectorXd r = apply_killed(chain, I, phi) - root.lambda * phi;
        root.residual = q_norm(chain, r);
        if (root.residual > 1e-8)
            throw NumericalError("eigenvector rebuilt from the determinant root has residual " +
                                 std::to_string(root.residual));
        roots.push_back(std::move(root));
    }
    std::sort(roots.begin(), roots.end(),
              [](const DetRoot& x, const DetRoot& y) { return x.lambda < y.lambda; });
    return roots;
}

DvReport dv_bound_check(const ChainModel& chain, const StateSet& J) {
    if (J.isEmpty()) throw InputError("target set must be nonempty");
    DvReport rep;
    rep.lambda = principal_eigenvalue(chain, J);
    HittingSolution mt = mean_time_conditioned(chain, J, StateSet::empty(chain.n));
    for (int x = 0; x < chain.n; ++x) {
        if (J.contains(x)) continue;
        double v = mt.values(x).real();
        if (v > rep.max_mean_time) {
            rep.max_mean_time = v;
            rep.argmax = x;
        }
    }
    rep.product = rep.lambda * rep.max_mean_time;
    return rep;
}

DualityReport eigen_time_duality(const ChainModel& chain, const StateSet& M, const StateSet& I) {
    if (I.isEmpty()) throw InputError("exclusion set must be nonempty");
    for (int z : I.members())
        if (!M.contains(z)) throw InputError("exclusion set must consist of metastable points");
    StateSet rest = M.minus(I);
    if (rest.isEmpty()) throw InputError("exclusion set already covers every metastable point");

    DualityReport rep;
    double T_I = 0.0, second = 0.0;
    for (int x : rest.members()) {
        double t = hitting_scale(chain, x, I);
        if (t > T_I) {
            second = T_I;
            T_I = t;
            rep.m = x;
        } else {
            second = std::max(second, t);
        }
    }
    if (rest.size() > 1 && second >= T_I * (1.0 - 1e-9))
        throw DegeneracyError("deepest remaining point is not unique");

    rep.lambda_I = principal_eigenvalue(chain, I);
    rep.u_I = -std::log1p(-rep.lambda_I);
    const StateSet m_set = StateSet::single(rep.m, chain.n);
    double u_lim = laplace_abscissa(chain, I.unite(m_set));
    u_lim -= 1e-9 * std::min(u_lim, 1.0);
    // The return transform through m must be analytic at u_I; when killing m
    // leaves the principal mode untouched the pole sits at u_I itself and the
    // duality regime does not hold.
    if (!(rep.u_I < u_lim))
        throw DomainError(
            "principal eigenvalue is not controlled by the deepest remaining point "
            "(return transform pole at or below u_I)");
    rep.mean_time = mean_time_conditioned(chain, I, StateSet::empty(chain.n)).values(rep.m).real();
    rep.product_dev = std::abs(rep.lambda_I * rep.mean_time - 1.0);

    ValleyDecomposition dec = valleys(chain, M);
    double R_m = 1.0;
    for (int j = 0; j < M.size(); ++j)
        if (M.members()[static_cast<size_t>(j)] == rep.m) R_m = dec.R[static_cast<size_t>(j)];
    rep.capacity_form_dev = std::abs(rep.lambda_I * T_I / R_m - 1.0);

    rep.closure_error =
        std::abs(real_g_at(chain, m_set, I, rep.u_I, rep.m) - 1.0);

    LaplaceFamily fam = laplace_family(chain, m_set, I, rep.u_I);
    rep.slope_solver = fam.dG(rep.m);
    double h = 1e-3 * std::min(u_lim - rep.u_I, 1.0);
    rep.slope_fd = (real_g_at(chain, m_set, I, rep.u_I + h, rep.m) -
                    real_g_at(chain, m_set, I, rep.u_I - h, rep.m)) /
                   (2.0 * h);
    rep.slope_rel_error = std::abs(rep.slope_fd - rep.slope_solver) / std::abs(rep.slope_solver);

    rep.restricted_mean = laplace_family(chain, m_set, I, 0.0).dG(rep.m);
    rep.linearization_dev = std::abs(rep.restricted_mean * R_m - 1.0);
    StateSet Im = I.unite(m_set);
    rep.predicted_scale = M.minus(Im).isEmpty() ? 0.0 : set_depth(chain, M, Im) / T_I;
    return rep;
}

SpectralReport low_spectrum_verify(const ChainModel& chain, const Hierarchy& h) {
    const StateSet& I = h.I0;
    const int j0 = h.depth();
    DenseSpectrum sp = dense_spectrum(chain, I);
    const int dim = static_cast<int>(sp.interior.size());
    if (j0 > dim) throw InputError("hierarchy is deeper than the interior dimension");

    SpectralReport rep;
    rep.I = I;
    rep.j0 = j0;
    int keep = std::min(dim, j0 + 2);
    for (int i = 0; i < keep; ++i) rep.eigenvalues.push_back(sp.evals(i));
    rep.phi = Eigen::MatrixXd::Zero(chain.n, j0);
    for (int j = 0; j < j0; ++j) {
        rep.phi.col(j) = lift_vector(chain, sp.interior, sp.psi.col(j));
        Eigen::VectorXd r =
            apply_killed(chain, I, rep.phi.col(j)) - sp.evals(j) * rep.phi.col(j);
        rep.max_residual = std::max(rep.max_residual, q_norm(chain, r));
        Eigen::VectorXd psi = rep.phi.col(j).cwiseProduct(chain.Q);
        Eigen::VectorXd lr = chain.P.transpose() * psi;
        for (int x : I.members()) lr(x) = 0.0;
        lr -= (1.0 - sp.evals(j)) * psi;
        rep.left_residual = std::max(rep.left_residual, lr.norm() / psi.norm());
    }
    for (int a = 0; a < j0; ++a)
        for (int b = a; b < j0; ++b) {
            double g = q_dot(chain, rep.phi.col(a), rep.phi.col(b)) - (a == b ? 1.0 : 0.0);
            rep.ortho_error = std::max(rep.ortho_error, std::abs(g));
        }

    if (j0 < dim) {
        double lo = sp.evals(j0 - 1), hi = sp.evals(j0);
        rep.gap_ratio = lo > 0.0 ? hi / lo : kInf;
        rep.window_boundary = lo > 1e-14 ? std::sqrt(lo * hi) : 0.5 * hi;
        rep.window_count = 0;
        for (int i = 0; i < dim; ++i)
            if (sp.evals(i) < rep.window_boundary) ++rep.window_count;
    } else {
        rep.gap_ratio = kInf;
        rep.window_boundary = kInf;
        rep.window_count = dim;
    }
    rep.in_regime = rep.window_count == j0;

    // Strict growth of the principal eigenvalue along the exclusion chain.
    std::vector<double> prefix_lambda;
    for (int j = 0; j <= j0; ++j)
        prefix_lambda.push_back(principal_eigenvalue(chain, h.sigma[static_cast<size_t>(j)]));
    for (int j = 1; j <= j0; ++j)
        if (!(prefix_lambda[static_cast<size_t>(j)] > prefix_lambda[static_cast<size_t>(j - 1)]))
            rep.interlacing_ok = false;

    ValleyDecomposition dec = valleys(chain, h.M);

    for (int j = 1; j <= j0; ++j) {
        SpectralReport::Pairing pr;
        pr.j = j;
        pr.m = h.m[static_cast<size_t>(j - 1)];
        pr.lambda = sp.evals(j - 1);
        const StateSet& sigma_prev = h.sigma[static_cast<size_t>(j - 1)];
        pr.lambda_sigma = prefix_lambda[static_cast<size_t>(j - 1)];
        if (pr.lambda_sigma > 0.0)
            pr.dev_sigma = pr.lambda / pr.lambda_sigma - 1.0;
        else
            pr.dev_sigma = pr.lambda;
        if (!sigma_prev.isEmpty()) {
            double mean = mean_time_conditioned(chain, sigma_prev, StateSet::empty(chain.n))
                              .values(pr.m)
                              .real();
            pr.inv_mean = 1.0 / mean;
            pr.dev_mean = pr.lambda * mean - 1.0;
        }
        pr.predicted_scale = (std::isinf(h.script_T[static_cast<size_t>(j - 1)])
                                  ? 0.0
                                  : 1.0 / h.script_T[static_cast<size_t>(j - 1)]) +
                             h.ratio_next[static_cast<size_t>(j - 1)];
        pr.measured_C =
            pr.predicted_scale > 0.0 ? std::abs(pr.dev_sigma) / pr.predicted_scale : 0.0;

        double u_sigma = -std::log1p(-pr.lambda_sigma);
        pr.closure_error = std::abs(
            real_g_at(chain, StateSet::single(pr.m, chain.n), sigma_prev, u_sigma, pr.m) - 1.0);

        Eigen::VectorXd phi = rep.phi.col(j - 1);
        double at_m = phi(pr.m);
        if (std::abs(at_m) < 1e-12 * phi.cwiseAbs().maxCoeff()) {
            rep.in_regime = false;
        } else {
            Eigen::VectorXd scaled = phi / at_m;
            for (int k = 1; k < j; ++k) {
                double v = std::abs(scaled(h.m[static_cast<size_t>(k - 1)]));
                pr.phi_at_m.push_back(v);
                pr.localization_max = std::max(pr.localization_max, v);
            }
            Eigen::VectorXd committor =
                hitting_probability(chain, StateSet::single(pr.m, chain.n), sigma_prev)
                    .real_values();
            int pos = 0;
            for (int a = 0; a < h.M.size(); ++a)
                if (h.M.members()[static_cast<size_t>(a)] == pr.m) pos = a;
            for (int y : dec.valley[static_cast<size_t>(pos)].members())
                pr.committor_dev = std::max(pr.committor_dev, std::abs(scaled(y) - committor(y)));
        }
        rep.pairing.push_back(std::move(pr));
    }
    return rep;
}

}  // namespace metaspec
