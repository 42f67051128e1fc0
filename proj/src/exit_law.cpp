#include "metaspec/exit_law.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "linsolve.hpp"
#include "metaspec/kernels.hpp"
#include "metaspec/spectral.hpp"

namespace metaspec {

namespace {

void check_start(const ChainModel& chain, int x, const StateSet& I) {
    if (I.universe() != chain.n) throw InputError("state set universe does not match the chain");
    if (I.isEmpty()) throw InputError("target set must be nonempty");
    if (x < 0 || x >= chain.n) throw InputError("start state out of range");
    if (I.contains(x)) throw InputError("start state lies in the target set");
}

// Row-major dense copy of the killed operator, plus the interior index of x.
struct KilledIteration {
    std::vector<int> interior;
    std::vector<double> mat;  // d x d row-major
    int pos = -1;

    explicit KilledIteration(const ChainModel& chain, const StateSet& I, int x) {
        interior = I.complement().members();
        const int d = static_cast<int>(interior.size());
        mat.resize(static_cast<size_t>(d) * d);
        for (int a = 0; a < d; ++a) {
            if (interior[static_cast<size_t>(a)] == x) pos = a;
            for (int b = 0; b < d; ++b)
                mat[static_cast<size_t>(a) * d + b] =
                    chain.P(interior[static_cast<size_t>(a)], interior[static_cast<size_t>(b)]);
        }
    }
    int dim() const { return static_cast<int>(interior.size()); }
};

double mean_from_solver(const ChainModel& chain, int x, const StateSet& I) {
    return mean_time_conditioned(chain, I, StateSet::empty(chain.n)).values(x).real();
}

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SurvivalSeries survival_exact(const ChainModel& chain, int x, const StateSet& I, long long t_min,
                              long long cap) {
    check_start(chain, x, I);
    if (t_min < 1) throw InputError("need at least one step");

    SurvivalSeries s;
    s.x = x;
    s.I = I;
    KilledIteration it(chain, I, x);
    const int d = it.dim();
    std::vector<double> w(static_cast<size_t>(d), 1.0), next(static_cast<size_t>(d));
    s.survival.push_back(1.0);
    for (long long t = 1;; ++t) {
        kernels::matvec(it.mat.data(), static_cast<size_t>(d), static_cast<size_t>(d), w.data(),
                        next.data());
        w.swap(next);
        double sur = w[static_cast<size_t>(it.pos)];
        s.survival.push_back(sur);
        if (t >= t_min && sur <= 1e-12) break;
        if (t >= cap) {
            s.truncated = sur > 1e-12;
            break;
        }
    }
    size_t T = s.survival.size() - 1;
    double sum = 0.0;
    for (size_t t = T + 1; t-- > 0;) sum += s.survival[t];  // ascending magnitude
    s.decay = T >= 1 && s.survival[T - 1] > 0.0 ? s.survival[T] / s.survival[T - 1] : 0.0;
    s.tail_bound = s.decay < 1.0 ? s.survival[T] * s.decay / (1.0 - s.decay) : 0.0;
    s.mean = sum + s.tail_bound;  // E[tau] = sum_{t>=0} P[tau > t]
    return s;
}

LaplaceSurvival laplace_survival(const ChainModel& chain, int x, const StateSet& I, double u) {
    check_start(chain, x, I);
    LaplaceSurvival out;
    out.u = u;

    const std::vector<int> interior = I.complement().members();
    const int d = static_cast<int>(interior.size());
    int pos = -1;
    for (int a = 0; a < d; ++a)
        if (interior[static_cast<size_t>(a)] == x) pos = a;

    if (u == 0.0) {
        LaplaceFamily fam = laplace_family(chain, I, StateSet::empty(chain.n), 0.0);
        out.value_transform = fam.dG(x);
        Eigen::MatrixXd A(d, d);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                A(a, b) = (a == b ? 1.0 : 0.0) -
                          chain.P(interior[static_cast<size_t>(a)], interior[static_cast<size_t>(b)]);
        detail::RefinedLU<double> lu(std::move(A));
        Eigen::VectorXd m = lu.solve(Eigen::VectorXd::Ones(d), nullptr);
        out.value_resolvent = m(pos);
    } else {
        double u0 = laplace_abscissa(chain, I);
        if (u > u0 - 1e-9 * std::min(u0, 1.0))
            throw DomainError("u beyond the convergence abscissa " + std::to_string(u0));
        double g1 = g_values(chain, I, StateSet::empty(chain.n), u)(x);
        out.value_transform = (g1 - 1.0) / std::expm1(u);

        double lambda = -std::expm1(-u);
        Eigen::MatrixXd A(d, d);
        Eigen::VectorXd rhs(d);
        for (int a = 0; a < d; ++a) {
            int xa = interior[static_cast<size_t>(a)];
            for (int b = 0; b < d; ++b)
                A(a, b) = (a == b ? 1.0 - lambda : 0.0) -
                          chain.P(xa, interior[static_cast<size_t>(b)]);
            double flux = 0.0;
            for (int y : I.members()) flux += chain.P(xa, y);
            rhs(a) = flux;
        }
        detail::RefinedLU<double> lu(std::move(A));
        Eigen::VectorXd g = lu.solve(rhs, nullptr);
        out.value_resolvent = (g(pos) - 1.0) / std::expm1(u);

        SpectralReport sp = dirichlet_spectrum(chain, I, d);
        for (double lam : sp.eigenvalues) {
            if (lam >= 1.0) continue;
            if (std::abs(u + std::log1p(-lam)) < 1e-9) out.near_pole = true;
        }
    }
    out.rel_gap = std::abs(out.value_transform - out.value_resolvent) /
                  std::max({std::abs(out.value_transform), std::abs(out.value_resolvent), 1.0});
    return out;
}

SurvivalSeriesCheck laplace_survival_series_check(const ChainModel& chain, int x,
                                                  const StateSet& I, double u, long long cap) {
    check_start(chain, x, I);
    double u0 = laplace_abscissa(chain, I);
    if (u > u0 - 1e-9 * std::min(u0, 1.0))
        throw DomainError("u beyond the convergence abscissa " + std::to_string(u0));

    SurvivalSeriesCheck out;
    out.u = u;
    double g1 = g_values(chain, I, StateSet::empty(chain.n), u)(x);
    out.transform = u == 0.0 ? mean_from_solver(chain, x, I) : (g1 - 1.0) / std::expm1(u);

    KilledIteration it(chain, I, x);
    const int d = it.dim();
    std::vector<double> w(static_cast<size_t>(d), 1.0), next(static_cast<size_t>(d));
    const double eu = std::exp(u);
    double factor = 1.0, series = 1.0, prev10 = 1.0, sur = 1.0;
    long long t = 0;
    std::vector<double> window(10, 1.0);
    for (;;) {
        ++t;
        kernels::matvec(it.mat.data(), static_cast<size_t>(d), static_cast<size_t>(d), w.data(),
                        next.data());
        w.swap(next);
        sur = w[static_cast<size_t>(it.pos)];
        factor *= eu;
        series += sur * factor;
        prev10 = window[static_cast<size_t>(t % 10)];
        window[static_cast<size_t>(t % 10)] = sur;
        if (sur == 0.0) break;
        if (t >= 20) {
            double r10 = std::pow(sur / prev10, 0.1);
            double q = eu * r10;
            if (q < 1.0) {
                double tail = sur * factor * q / (1.0 - q);
                if (tail <= 1e-10 * std::max(std::abs(series), 1.0)) {
                    out.tail_rel = tail / std::max(std::abs(series), 1.0);
                    break;
                }
            }
        }
        if (t >= cap) {
            out.capped = true;
            out.tail_rel = 1.0;
            break;
        }
    }
    out.series = series;
    out.rel_gap = std::abs(out.series - out.transform) /
                  std::max({std::abs(out.series), std::abs(out.transform), 1.0});
    return out;
}

ResidueExpansion residue_expansion(const ChainModel& chain, int x, const Hierarchy& h) {
    const StateSet& I = h.I0;
    if (I.isEmpty()) throw InputError("residue expansion needs a nonempty target set");
    check_start(chain, x, I);

    ResidueExpansion out;
    out.x = x;
    out.j0 = h.depth();

    const int dim = chain.n - I.size();
    SpectralReport sp = dirichlet_spectrum(chain, I, dim);
    out.lambda = sp.eigenvalues;

    Eigen::VectorXd flux = Eigen::VectorXd::Zero(chain.n);
    for (int y = 0; y < chain.n; ++y) {
        if (I.contains(y)) continue;
        for (int z : I.members()) flux(y) += chain.P(y, z);
    }
    double csum = 0.0;
    for (int j = 0; j < dim; ++j) {
        Eigen::VectorXd phi = sp.phi.col(j);
        double mass = 0.0, fdot = 0.0;
        for (int y = 0; y < chain.n; ++y) {
            mass += chain.Q(y) * phi(y);
            fdot += chain.Q(y) * flux(y) * phi(y);
        }
        double c = phi(x) * mass;
        double fc = phi(x) * fdot / out.lambda[static_cast<size_t>(j)];
        out.coeff.push_back(c);
        out.flux_coeff.push_back(fc);
        out.flux_gap = std::max(out.flux_gap, std::abs(c - fc));
        // The flux form divides by lambda, so its roundoff floor grows like
        // eps/lambda for the slow poles; rescaling makes the gap comparable.
        out.flux_gap_scaled =
            std::max(out.flux_gap_scaled, std::abs(c - fc) * out.lambda[static_cast<size_t>(j)]);
        csum += c;
    }
    out.sum_error = std::abs(csum - 1.0);
    out.leading_gap = std::abs(out.coeff[0] - 1.0);
    for (size_t j = static_cast<size_t>(out.j0); j < out.coeff.size(); ++j)
        out.remainder_bound += std::abs(out.coeff[j]);
    if (out.j0 < dim) out.lambda_next = out.lambda[static_cast<size_t>(out.j0)];

    SurvivalSeries sur = survival_exact(chain, x, I);
    std::vector<double> rem;
    for (size_t t = 0; t < sur.survival.size(); ++t) {
        double recon = 0.0;
        for (int j = 0; j < out.j0; ++j)
            recon += out.coeff[static_cast<size_t>(j)] *
                     std::pow(1.0 - out.lambda[static_cast<size_t>(j)], static_cast<double>(t));
        double r = sur.survival[t] - recon;
        out.sup_reconstruction_error = std::max(out.sup_reconstruction_error, std::abs(r));
        rem.push_back(r);
    }
    // Decay rate of the remainder while it is still clear of roundoff.
    double sxx = 0.0, sxy = 0.0, sx = 0.0, sy = 0.0, sn = 0.0;
    for (size_t t = 0; t < rem.size(); ++t) {
        double a = std::abs(rem[t]);
        if (a < 1e-13 || a < 1e-6 * out.sup_reconstruction_error) continue;
        double lx = static_cast<double>(t), ly = std::log(a);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        sn += 1.0;
    }
    if (sn >= 2.0 && sn * sxx - sx * sx > 0.0)
        out.measured_decay = -(sn * sxy - sx * sy) / (sn * sxx - sx * sx);
    return out;
}

ExpLawReport exponential_law_check(const ChainModel& chain, int x, const StateSet& I) {
    check_start(chain, x, I);
    ExpLawReport rep;
    rep.mean = mean_from_solver(chain, x, I);

    long long hi = static_cast<long long>(std::floor(10.0 * rep.mean));
    long long lo = std::max<long long>(1, static_cast<long long>(std::ceil(0.1 * rep.mean)));
    const long long cap = 2000000;
    SurvivalSeries sur = survival_exact(chain, x, I, std::min(hi, cap), cap);
    if (hi > cap) {
        hi = cap;
        rep.capped = true;
    }
    hi = std::min<long long>(hi, static_cast<long long>(sur.survival.size()) - 1);
    rep.grid_lo = lo;
    rep.grid_hi = hi;
    long long count = hi - lo + 1;
    rep.grid_step = count > 200000 ? (count + 199999) / 200000 : 1;

    double sxx = 0.0, sxy = 0.0, sx = 0.0, sy = 0.0, sn = 0.0;
    for (long long s = lo; s <= hi; s += rep.grid_step) {
        double surv = sur.survival[static_cast<size_t>(s)];
        double t = static_cast<double>(s) / rep.mean;
        rep.sup_dev = std::max(rep.sup_dev, std::abs(surv - std::exp(-t)));
        if (surv > 0.0) {
            double lx = static_cast<double>(s), ly = std::log(surv);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            sn += 1.0;
        }
    }
    if (sn >= 2.0 && sn * sxx - sx * sx > 0.0)
        rep.theta = -(sn * sxy - sx * sy) / (sn * sxx - sx * sx) * rep.mean;
    return rep;
}

MCSample sample_exit_times(const ChainModel& chain, int x, const StateSet& I, long long count,
                           std::uint64_t seed, int jobs) {
    check_start(chain, x, I);
    if (count < 1) throw InputError("need at least one trajectory");
    jobs = std::max(1, jobs);

    MCSample mc;
    mc.count = count;
    mc.seed = seed;
    mc.band = 1.36 / std::sqrt(static_cast<double>(count));
    mc.times.assign(static_cast<size_t>(count), 0);

    std::vector<std::vector<double>> cum(static_cast<size_t>(chain.n));
    for (int a = 0; a < chain.n; ++a) {
        cum[static_cast<size_t>(a)].resize(static_cast<size_t>(chain.n));
        double run = 0.0;
        for (int b = 0; b < chain.n; ++b) {
            run += chain.P(a, b);
            cum[static_cast<size_t>(a)][static_cast<size_t>(b)] = run;
        }
        cum[static_cast<size_t>(a)].back() = 1.0;
    }

    const long long kStepCap = 1000000000LL;
    std::vector<char> abort_flags(static_cast<size_t>(jobs), 0);
    auto run_block = [&](long long begin, long long end, int worker) {
        for (long long i = begin; i < end; ++i) {
            std::uint64_t s =
                splitmix64(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1));
            std::mt19937_64 eng(splitmix64(s));
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            int state = x;
            long long t = 0;
            for (;;) {
                ++t;
                double r = uni(eng);
                const auto& row = cum[static_cast<size_t>(state)];
                state = static_cast<int>(
                    std::lower_bound(row.begin(), row.end(), r) - row.begin());
                if (state >= chain.n) state = chain.n - 1;
                if (I.contains(state)) break;
                if (t >= kStepCap) {
                    abort_flags[static_cast<size_t>(worker)] = 1;
                    break;
                }
            }
            mc.times[static_cast<size_t>(i)] = t;
        }
    };

    if (jobs == 1) {
        run_block(0, count, 0);
    } else {
        std::vector<std::thread> pool;
        long long chunk = (count + jobs - 1) / jobs;
        for (int wkr = 0; wkr < jobs; ++wkr) {
            long long b = wkr * chunk, e = std::min(count, b + chunk);
            if (b >= e) break;
            pool.emplace_back(run_block, b, e, wkr);
        }
        for (auto& th : pool) th.join();
    }
    for (char f : abort_flags) mc.aborted |= f != 0;
    std::sort(mc.times.begin(), mc.times.end());

    long long t_top = mc.times.back();
    SurvivalSeries sur = survival_exact(chain, x, I);
    auto survival_at = [&](long long t) -> double {
        if (t < 0) return 1.0;
        long long T = static_cast<long long>(sur.survival.size()) - 1;
        if (t <= T) return sur.survival[static_cast<size_t>(t)];
        return sur.survival[static_cast<size_t>(T)] *
               std::pow(sur.decay, static_cast<double>(t - T));
    };
    // Exact KS over the integers: the empirical CDF steps only at sample
    // values, the exact CDF rises everywhere.
    double n = static_cast<double>(count);
    size_t idx = 0;
    double prev_emp = 0.0;
    while (idx < mc.times.size()) {
        long long v = mc.times[static_cast<size_t>(idx)];
        size_t j = idx;
        while (j < mc.times.size() && mc.times[j] == v) ++j;
        double emp = static_cast<double>(j) / n;
        mc.ks = std::max(mc.ks, std::abs(emp - (1.0 - survival_at(v))));
        mc.ks = std::max(mc.ks, std::abs(prev_emp - (1.0 - survival_at(v - 1))));
        prev_emp = emp;
        idx = j;
    }
    mc.ks = std::max(mc.ks, std::abs(1.0 - (1.0 - survival_at(t_top))));
    return mc;
}

}  // namespace metaspec
