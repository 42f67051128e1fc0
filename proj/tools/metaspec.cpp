// Command-line front end: file-driven runs over the library, JSON reports on
// stdout, optional CSV exports. Exit codes: 0 all checks pass, 2 soft checks
// deviated, 3 hard failure (domain/degeneracy/numerical), 4 input error.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metaspec/chain.hpp"
#include "metaspec/exit_law.hpp"
#include "metaspec/io.hpp"
#include "metaspec/kernels.hpp"
#include "metaspec/landscape.hpp"
#include "metaspec/metastable.hpp"
#include "metaspec/solver.hpp"
#include "metaspec/spectral.hpp"

using namespace metaspec;
using json = nlohmann::json;

namespace {

json tool_block() {
    return json{{"name", io::kToolName}, {"version", io::kToolVersion}};
}

json envelope(const std::string& command, const json& config,
              const std::vector<std::string>& input_paths) {
    json j;
    j["tool"] = tool_block();
    j["command"] = command;
    j["config"] = config;
    json inputs = json::array();
    for (const auto& p : input_paths) inputs.push_back(io::file_stamp(p));
    j["inputs"] = inputs;
    return j;
}

void emit(const json& j) { std::cout << io::canonical_dump(j); }

int default_jobs() {
    if (const char* env = std::getenv("METASPEC_JOBS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

int parse_state(const ChainModel& chain, const std::string& tok) {
    int idx = chain.index_of_label(tok);
    if (idx >= 0) return idx;
    try {
        size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos == tok.size() && v >= 0 && v < chain.n) return v;
    } catch (...) {
    }
    throw InputError("unknown state '" + tok + "'");
}

std::vector<int> parse_states(const ChainModel& chain, const std::string& csv) {
    std::vector<int> out;
    std::string tok;
    std::istringstream ss(csv);
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(parse_state(chain, tok));
    }
    return out;
}

StateSet parse_set(const ChainModel& chain, const std::string& csv) {
    return StateSet(parse_states(chain, csv), chain.n);
}

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_matrix_csv(const std::string& path, const ChainModel& chain, const StateSet& M,
                      const Eigen::MatrixXd& mat) {
    std::string s = "state";
    for (int m : M.members()) s += "," + chain.label(m);
    s += "\n";
    for (int a = 0; a < M.size(); ++a) {
        s += chain.label(M.members()[static_cast<size_t>(a)]);
        for (int b = 0; b < M.size(); ++b) s += "," + csv_num(mat(a, b));
        s += "\n";
    }
    io::write_file(path, s);
}

// Collected pass/fail rows; hard rows gate exit code 3, soft rows exit code 2.
struct CheckMatrix {
    json rows = json::array();
    int hard_failures = 0;
    int soft_failures = 0;

    void add(const std::string& name, bool hard, bool pass, json detail = json::object()) {
        detail["name"] = name;
        detail["kind"] = hard ? "hard" : "soft";
        detail["pass"] = pass;
        rows.push_back(std::move(detail));
        if (!pass) ++(hard ? hard_failures : soft_failures);
    }
    void skip(const std::string& name, bool hard, const std::string& why) {
        add(name, hard, true, json{{"skipped", true}, {"reason", why}});
    }
    int exit_code() const { return hard_failures ? 3 : (soft_failures ? 2 : 0); }
    json summary() const {
        return json{{"hard_failures", hard_failures},
                    {"soft_failures", soft_failures},
                    {"pass", hard_failures == 0 && soft_failures == 0}};
    }
};

double mixed_rel(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

StateSet pick_metastable(const ChainModel& chain, const std::string& members, int auto_k) {
    if (!members.empty()) return parse_set(chain, members);
    int k = auto_k > 0 ? std::min(auto_k, chain.n) : std::min(2, chain.n);
    return propose_metastable_set(chain, k).M;
}

// ---------------------------------------------------------------------------
// build

struct BuildArgs {
    std::string spec_path, out_path, preset, dynamics;
    int d = 0, N = 0;
    double beta = 0.0;
    std::vector<std::string> params;
    bool have_beta = false;
};

int run_build(const BuildArgs& a) {
    PotentialSpec spec;
    std::vector<std::string> inputs;
    if (!a.spec_path.empty()) {
        spec = io::load_potential(a.spec_path);
        inputs.push_back(a.spec_path);
    }
    if (a.preset.size()) spec.preset = a.preset;
    if (a.d > 0) spec.d = a.d;
    if (a.N > 0) spec.N = a.N;
    if (a.have_beta) spec.beta = a.beta;
    if (!a.dynamics.empty()) spec.dynamics = a.dynamics;
    for (const auto& kv : a.params) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw InputError("expected key=value, got '" + kv + "'");
        spec.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    if (a.spec_path.empty() && spec.preset.empty() && spec.F.empty())
        throw InputError("build needs --spec or --preset");

    ChainModel chain = build_landscape(spec);
    io::save_chain(chain, a.out_path);

    json config{{"spec", a.spec_path}, {"out", a.out_path},   {"preset", spec.preset},
                {"d", spec.d},         {"N", spec.N},         {"beta", io::num(spec.beta)},
                {"dynamics", spec.dynamics}};
    json rep = envelope("build", config, inputs);
    rep["states"] = chain.n;
    rep["validation"] = io::describe(validate(chain));
    rep["output"] = io::file_stamp(a.out_path);
    emit(rep);
    return 0;
}

// ---------------------------------------------------------------------------
// hit

int run_hit(const std::string& chain_path, const std::string& target, const std::string& avoid,
            std::optional<double> u) {
    ChainModel chain = io::load_chain(chain_path);
    StateSet I = parse_set(chain, target);
    StateSet J = avoid.empty() ? StateSet::empty(chain.n) : parse_set(chain, avoid);
    HittingSolution sol = u ? laplace_transform(chain, I, J, std::complex<double>(*u, 0.0))
                            : hitting_probability(chain, I, J);
    json config{{"chain", chain_path},
                {"target", target},
                {"avoid", avoid},
                {"u", u ? io::num(*u) : json()}};
    json rep = envelope("hit", config, {chain_path});
    rep["solution"] = io::describe(sol, chain);
    emit(rep);
    return 0;
}

// ---------------------------------------------------------------------------
// analyze

int run_analyze(const std::string& chain_path, const std::string& members, int auto_k,
                const std::string& csv_prefix) {
    ChainModel chain = io::load_chain(chain_path);
    StateSet M = pick_metastable(chain, members, auto_k);
    MetastableSpec spec = check_metastable_set(chain, M);
    ValleyDecomposition dec = valleys(chain, M);
    CapacityTable caps = capacities(chain, M);
    GenericityReport gen = check_genericity(chain, M);
    Hierarchy hier = build_hierarchy(chain, M, StateSet::empty(chain.n));

    json checks;
    checks["genericity"] = io::describe(gen);
    json exits = json::array();
    for (int j = 1; j < hier.depth(); ++j) {
        exits.push_back(io::describe(
            mean_exit_time(chain, M, hier.m[static_cast<size_t>(j)],
                           hier.sigma[static_cast<size_t>(j)].minus(
                               StateSet::single(hier.m[static_cast<size_t>(j)], chain.n)))));
    }
    checks["exit_times"] = exits;

    json config{{"chain", chain_path},
                {"metastable", members},
                {"auto", auto_k},
                {"csv", csv_prefix}};
    json rep = envelope("analyze", config, {chain_path});
    rep["metastable"] = io::describe(spec, chain);
    rep["valleys"] = io::describe(dec, chain);
    rep["capacities"] = io::describe(caps, chain);
    rep["hierarchy"] = io::describe(hier, chain);
    rep["checks"] = checks;
    emit(rep);

    if (!csv_prefix.empty()) {
        write_matrix_csv(csv_prefix + "_E.csv", chain, M, caps.E);
        write_matrix_csv(csv_prefix + "_e.csv", chain, M, caps.e);
    }

    bool soft = spec.separation() >= 0.5;
    for (const auto& c : dec.overlap_checks) soft = soft || !c.ok;
    for (const auto& s : caps.sandwiches) soft = soft || !s.ok;
    return soft ? 2 : 0;
}

// ---------------------------------------------------------------------------
// spectrum

Hierarchy load_hierarchy(const std::string& path, const ChainModel& chain) {
    json j = json::parse(io::read_file(path));
    if (j.contains("hierarchy")) j = j["hierarchy"];
    return io::hierarchy_from_json(j, chain);
}

int run_spectrum(const std::string& chain_path, const std::string& exclude, int k,
                 const std::string& verify_path, const std::string& csv_path) {
    ChainModel chain = io::load_chain(chain_path);
    StateSet I = exclude.empty() ? StateSet::empty(chain.n) : parse_set(chain, exclude);

    std::vector<std::string> inputs{chain_path};
    if (!verify_path.empty()) inputs.push_back(verify_path);
    json config{{"chain", chain_path},
                {"exclude", exclude},
                {"k", k},
                {"verify", verify_path},
                {"csv", csv_path}};
    json rep = envelope("spectrum", config, inputs);

    CheckMatrix matrix;
    SpectralReport sr;
    StateSet detJ = StateSet::empty(chain.n);
    if (!verify_path.empty()) {
        Hierarchy hier = load_hierarchy(verify_path, chain);
        sr = low_spectrum_verify(chain, hier);
        detJ = hier.M.minus(sr.I);
        matrix.add("interlacing", true, sr.interlacing_ok);
        matrix.add("eigen_residual", true, sr.max_residual <= 1e-8,
                   json{{"value", io::num(sr.max_residual)}, {"threshold", 1e-8}});
        matrix.add("orthonormality", true, sr.ortho_error <= 1e-10,
                   json{{"value", io::num(sr.ortho_error)}, {"threshold", 1e-10}});
        double worst_closure = 0.0;
        for (const auto& p : sr.pairing) worst_closure = std::max(worst_closure, p.closure_error);
        matrix.add("transform_closure", true, worst_closure <= 1e-8,
                   json{{"value", io::num(worst_closure)}, {"threshold", 1e-8}});
        matrix.add("window_count", false, sr.window_count == sr.j0,
                   json{{"count", sr.window_count}, {"expected", sr.j0}});
        matrix.add("gap_ratio", false, sr.gap_ratio >= 10.0,
                   json{{"value", io::num(sr.gap_ratio)}, {"threshold", 10.0}});
        matrix.add("regime", false, sr.in_regime);
    } else {
        sr = dirichlet_spectrum(chain, I, k);
        matrix.add("eigen_residual", true, sr.max_residual <= 1e-8,
                   json{{"value", io::num(sr.max_residual)}, {"threshold", 1e-8}});
        matrix.add("orthonormality", true, sr.ortho_error <= 1e-10,
                   json{{"value", io::num(sr.ortho_error)}, {"threshold", 1e-10}});
    }
    rep["spectrum"] = io::describe(sr);

    if (!detJ.isEmpty()) {
        auto roots = eigen_roots_via_detg(chain, sr.I, detJ);
        rep["roots"] = io::describe(roots);
        double worst = 0.0;
        for (size_t i = 0; i < roots.size() && i < sr.eigenvalues.size(); ++i)
            worst = std::max(worst, mixed_rel(roots[i].lambda, sr.eigenvalues[i]));
        matrix.add("det_roots_match", true, worst <= 1e-10,
                   json{{"value", io::num(worst)}, {"threshold", 1e-10}});
    }

    if (!csv_path.empty()) {
        if (detJ.isEmpty()) throw InputError("--csv needs --verify to define the point set");
        double hi = std::min(principal_eigenvalue(chain, sr.I.unite(detJ)), 0.999);
        double lo = 1e-6 * hi;
        std::string s = "u,det\n";
        for (int i = 0; i <= 256; ++i) {
            double lam = lo * std::pow(hi / lo, i / 256.0) * (1.0 - 1e-9);
            double u = -std::log1p(-lam);
            s += csv_num(u) + "," + csv_num(det_g(chain, sr.I, detJ, u).det) + "\n";
        }
        io::write_file(csv_path, s);
    }

    rep["checks"] = matrix.rows;
    rep["summary"] = matrix.summary();
    emit(rep);
    return matrix.exit_code();
}

// ---------------------------------------------------------------------------
// exitlaw

int run_exitlaw(const std::string& chain_path, const std::string& from, const std::string& target,
                long long mc, std::uint64_t seed, int jobs, int auto_k,
                const std::string& hierarchy_path, const std::string& csv_path) {
    ChainModel chain = io::load_chain(chain_path);
    int x = parse_state(chain, from);
    StateSet I = parse_set(chain, target);
    if (I.contains(x)) throw InputError("start state lies in the target set");

    std::vector<std::string> inputs{chain_path};
    if (!hierarchy_path.empty()) inputs.push_back(hierarchy_path);
    json config{{"chain", chain_path}, {"from", from}, {"target", target},
                {"mc", mc},            {"seed", seed}, {"jobs", jobs},
                {"auto", auto_k},      {"hierarchy", hierarchy_path}, {"csv", csv_path}};
    json rep = envelope("exitlaw", config, inputs);

    SurvivalSeries surv = survival_exact(chain, x, I);
    LaplaceSurvival mean_routes = laplace_survival(chain, x, I, 0.0);
    ExpLawReport explaw = exponential_law_check(chain, x, I);
    rep["survival"] = io::describe(surv);
    rep["mean"] = json{{"series", io::num(surv.mean)},
                       {"transform", io::num(mean_routes.value_transform)},
                       {"resolvent", io::num(mean_routes.value_resolvent)},
                       {"rel_gap", io::num(mean_routes.rel_gap)}};
    rep["exponential_law"] = io::describe(explaw);

    std::optional<ResidueExpansion> res;
    if (!hierarchy_path.empty() || auto_k > 0) {
        Hierarchy hier =
            hierarchy_path.empty()
                ? build_hierarchy(chain, pick_metastable(chain, "", auto_k).unite(I), I)
                : load_hierarchy(hierarchy_path, chain);
        if (!(hier.I0 == I))
            throw InputError("hierarchy exclusion set must equal the exit target");
        res = residue_expansion(chain, x, hier);
        rep["residues"] = io::describe(*res);
    }

    int code = 0;
    if (mc > 0) {
        MCSample sample = sample_exit_times(chain, x, I, mc, seed, jobs);
        rep["mc"] = io::describe(sample);
        if (sample.ks > sample.band || sample.aborted) code = 2;
    }
    emit(rep);

    if (!csv_path.empty()) {
        std::string s = "t,survival,reconstruction\n";
        for (size_t t = 0; t < surv.survival.size(); ++t) {
            double recon;
            if (res) {
                recon = 0.0;
                for (int j = 0; j < res->j0 && j < static_cast<int>(res->coeff.size()); ++j)
                    recon += res->coeff[static_cast<size_t>(j)] *
                             std::pow(1.0 - res->lambda[static_cast<size_t>(j)],
                                      static_cast<double>(t));
            } else {
                recon = std::exp(-explaw.theta * static_cast<double>(t) / explaw.mean);
            }
            s += std::to_string(t) + "," + csv_num(surv.survival[t]) + "," + csv_num(recon) + "\n";
        }
        io::write_file(csv_path, s);
    }
    return code;
}

// ---------------------------------------------------------------------------
// verify

int run_verify(const std::string& chain_path, const std::string& members, int auto_k,
               long long mc, std::uint64_t seed, int jobs) {
    ChainModel chain = io::load_chain(chain_path);
    const int n = chain.n;
    StateSet M = pick_metastable(chain, members, auto_k);
    MetastableSpec mspec = check_metastable_set(chain, M);

    json config{{"chain", chain_path}, {"metastable", members}, {"auto", auto_k},
                {"mc", mc},            {"seed", seed},          {"jobs", jobs}};
    json rep = envelope("verify", config, {chain_path});
    rep["metastable"] = io::describe(mspec, chain);

    CheckMatrix matrix;
    {
        ValidationReport v = validate(chain);
        matrix.add("chain_valid", true, v.ok(),
                   json{{"row_sum", io::num(v.max_row_sum_error)},
                        {"detailed_balance", io::num(v.max_detailed_balance_rel_error)}});
    }

    const auto& mm = M.members();
    int m1 = mm[0];
    for (int m : mm)
        if (chain.Q(m) > chain.Q(m1)) m1 = m;
    StateSet m1s = StateSet::single(m1, n);
    int m2 = -1;
    for (int m : mm)
        if (m != m1) {
            m2 = m;
            break;
        }
    int x0 = mspec.b_argmin;  // worst-attached state outside M; -1 when M is everything

    // Transform identity suite at u = 0, a safe positive u, and a negative u.
    {
        StateSet I = m1s;
        StateSet J = m2 >= 0 ? StateSet::single(m2, n) : StateSet::empty(n);
        StateSet L = x0 >= 0 ? StateSet::single(x0, n) : StateSet::empty(n);
        double u0 = laplace_abscissa(chain, I.unite(J));
        IdentityReport worst;
        for (double u : {0.0, std::min(0.05, 0.5 * u0), -0.2}) {
            IdentityReport r = verify_identities(chain, I, J, L, u);
            worst.strong_markov = std::max(worst.strong_markov, r.strong_markov);
            worst.one_step = std::max(worst.one_step, r.one_step);
            worst.derivative = std::max(worst.derivative, r.derivative);
            worst.derivative_fd = std::max(worst.derivative_fd, r.derivative_fd);
            worst.renewal = std::max(worst.renewal, r.renewal);
            worst.reversibility = std::max(worst.reversibility, r.reversibility);
            worst.linear_residual = std::max(worst.linear_residual, r.linear_residual);
        }
        auto row = [&](const std::string& name, double v, double tol) {
            matrix.add(name, true, v <= tol, json{{"value", io::num(v)}, {"threshold", tol}});
        };
        row("strong_markov", worst.strong_markov, 1e-8);
        row("one_step_series", worst.one_step, 1e-8);
        row("derivative_system", worst.derivative, 1e-8);
        row("derivative_fd", worst.derivative_fd, 1e-4);
        row("renewal_relation", worst.renewal, 1e-8);
        row("transform_reversibility", worst.reversibility, 1e-8);
        row("solver_residual", worst.linear_residual, 1e-8);
    }

    // Green kernel on the complement of M: two independent routes, symmetry,
    // the fundamental-solution identity and the measure-weighted representation.
    StateSet omega = M.complement();
    if (!omega.isEmpty() && x0 >= 0) {
        GreenMatrix direct = greens_function(chain, omega, GreenMethod::DirectInverse);
        GreenMatrix viahit = greens_function(chain, omega, GreenMethod::HittingFormula);
        double gap = 0.0;
        for (int a = 0; a < direct.values.rows(); ++a)
            for (int b = 0; b < direct.values.cols(); ++b)
                gap = std::max(gap, mixed_rel(direct.values(a, b), viahit.values(a, b)));
        for (int a = 0; a < direct.exit_values.rows(); ++a)
            for (int b = 0; b < direct.exit_values.cols(); ++b)
                gap = std::max(gap, mixed_rel(direct.exit_values(a, b), viahit.exit_values(a, b)));
        matrix.add("green_two_route", true, gap <= 1e-8,
                   json{{"value", io::num(gap)}, {"threshold", 1e-8}});
        double sym = std::max(direct.symmetry_rel_error, viahit.symmetry_rel_error);
        matrix.add("green_symmetry", true, sym <= 1e-8,
                   json{{"value", io::num(sym)}, {"threshold", 1e-8}});

        // Applying the killed operator to K(. -> x0 before M) leaves only a
        // point mass of weight P[tau_M < tau_x0] at x0.
        {
            Eigen::VectorXd kvec = k_values(chain, StateSet::single(x0, n), M);
            DirichletOperator op = dirichlet(chain, M);
            Eigen::VectorXd inner(op.dim());
            for (int i = 0; i < op.dim(); ++i) inner(i) = kvec(op.interior[static_cast<size_t>(i)]);
            Eigen::VectorXd w = op.one_minus_p() * inner;
            double esc = escape_probability(chain, x0, M);
            double resid = 0.0;
            for (int i = 0; i < op.dim(); ++i) {
                double expect = op.interior[static_cast<size_t>(i)] == x0 ? esc : 0.0;
                resid = std::max(resid, mixed_rel(w(i), expect));
            }
            matrix.add("green_fundamental", true, resid <= 1e-8,
                       json{{"value", io::num(resid)}, {"threshold", 1e-8}});

            // Q(x) P[tau_M < tau_x] G(x,y) = Q(y) K(y -> x before M)
            double rep_resid = 0.0;
            int xi = 0;
            while (op.interior[static_cast<size_t>(xi)] != x0) ++xi;
            for (int i = 0; i < op.dim(); ++i) {
                int y = op.interior[static_cast<size_t>(i)];
                double left = chain.Q(x0) * esc * direct.values(xi, i);
                double right = chain.Q(y) * kvec(y);
                rep_resid = std::max(rep_resid, mixed_rel(left, right));
            }
            matrix.add("green_representation", true, rep_resid <= 1e-8,
                       json{{"value", io::num(rep_resid)}, {"threshold", 1e-8}});
        }

        double dmin = 4.0, dmax = 0.0, dprod = 0.0;
        const auto& om = omega.members();
        for (size_t a = 0; a < om.size() && a < 4; ++a)
            for (size_t b = a + 1; b < om.size() && b < 4; ++b) {
                double d1 = delta_factor(chain, omega, om[a], om[b]);
                double d2 = delta_factor(chain, omega, om[b], om[a]);
                dmin = std::min({dmin, d1, d2});
                dmax = std::max({dmax, d1, d2});
                dprod = std::max(dprod, std::abs(d1 * d2 - 1.0));
            }
        if (om.size() >= 2) {
            matrix.add("delta_range", true, dmin >= 1.0 / 3 - 1e-12 && dmax <= 3.0 + 1e-12,
                       json{{"min", io::num(dmin)}, {"max", io::num(dmax)}});
            matrix.add("delta_product", true, dprod <= 1e-10,
                       json{{"value", io::num(dprod)}, {"threshold", 1e-10}});
        } else {
            matrix.skip("delta_range", true, "fewer than two interior states");
            matrix.skip("delta_product", true, "fewer than two interior states");
        }

        // Conditional means are bounded by 3 |state space| / b.
        {
            double cap = 3.0 * static_cast<double>(n) / mspec.b_N;
            double worst = 0.0;
            HittingSolution plain = mean_time_conditioned(chain, M, StateSet::empty(n));
            for (int y : omega.members()) worst = std::max(worst, plain.real_values()(y));
            if (m2 >= 0) {
                HittingSolution cond = mean_time_conditioned(chain, m1s, M.minus(m1s));
                for (int y : omega.members()) {
                    if (std::find(cond.flagged.begin(), cond.flagged.end(), y) !=
                        cond.flagged.end())
                        continue;
                    worst = std::max(worst, cond.real_values()(y));
                }
            }
            matrix.add("conditional_mean_bound", true, worst <= cap * (1.0 + 1e-12),
                       json{{"value", io::num(worst)}, {"threshold", io::num(cap)}});
        }
    } else {
        for (const char* name : {"green_two_route", "green_symmetry", "green_fundamental",
                                 "green_representation", "delta_range", "delta_product",
                                 "conditional_mean_bound"})
            matrix.skip(name, true, "no interior states outside the metastable set");
    }

    ValleyDecomposition dec = valleys(chain, M);
    {
        CapacityTable caps = capacities(chain, M);
        matrix.add("capacity_symmetry", true, caps.symmetry_rel_error <= 1e-8,
                   json{{"value", io::num(caps.symmetry_rel_error)}, {"threshold", 1e-8}});
        matrix.add("capacity_ultrametric", true,
                   caps.ultrametric_defect <= std::log(3.0) + 1e-9,
                   json{{"value", io::num(caps.ultrametric_defect)},
                        {"threshold", io::num(std::log(3.0))}});
        bool all_ok = true;
        for (const auto& s : caps.sandwiches) all_ok = all_ok && s.ok;
        matrix.add("capacity_sandwich", true, all_ok,
                   json{{"cases", caps.sandwiches.size()}});
        bool masses_ok = true;
        for (const auto& c : dec.overlap_checks) masses_ok = masses_ok && c.ok;
        matrix.add("valley_mass_bound", true, masses_ok,
                   json{{"cases", dec.overlap_checks.size()}});
    }

    {
        DvReport dv = dv_bound_check(chain, m1s);
        matrix.add("dv_product", true, dv.product >= 1.0 - 1e-12, io::describe(dv));
        rep["dv"] = io::describe(dv);
    }

    std::optional<Hierarchy> hier;
    std::string hier_issue;
    try {
        hier = build_hierarchy(chain, M, StateSet::empty(n));
    } catch (const DegeneracyError& e) {
        hier_issue = e.what();
    }

    if (n <= 256) {
        auto roots = eigen_roots_via_detg(chain, StateSet::empty(n), M);
        SpectralReport sr = dirichlet_spectrum(chain, StateSet::empty(n),
                                               static_cast<int>(roots.size()));
        double worst = 0.0;
        for (size_t i = 0; i < roots.size(); ++i)
            worst = std::max(worst, mixed_rel(roots[i].lambda, sr.eigenvalues[i]));
        matrix.add("det_roots_match", true, worst <= 1e-10,
                   json{{"value", io::num(worst)}, {"count", roots.size()},
                        {"threshold", 1e-10}});
    } else {
        matrix.skip("det_roots_match", true, "chain too large for the scan");
    }

    if (hier && hier->depth() >= 2) {
        const StateSet& prefix = hier->sigma[static_cast<size_t>(hier->depth() - 1)];
        DualityReport dual = eigen_time_duality(chain, M, prefix);
        matrix.add("duality_closure", true, dual.closure_error <= 1e-8,
                   json{{"value", io::num(dual.closure_error)}, {"threshold", 1e-8}});
        matrix.add("duality_slope", true, dual.slope_rel_error <= 1e-4,
                   json{{"value", io::num(dual.slope_rel_error)}, {"threshold", 1e-4}});
        matrix.add("duality_product", false, dual.product_dev <= 0.5,
                   json{{"value", io::num(dual.product_dev)}, {"threshold", 0.5}});
        rep["duality"] = io::describe(dual);
    } else {
        std::string why = hier ? "hierarchy depth below two" : "degenerate hierarchy: " + hier_issue;
        matrix.skip("duality_closure", true, why);
        matrix.skip("duality_slope", true, why);
        matrix.skip("duality_product", false, why);
    }

    // Exit law of tau_M from the worst-attached state.
    if (x0 >= 0) {
        double worst_gap = 0.0;
        double u0 = laplace_abscissa(chain, M);
        for (double u : {0.0, -0.1, 0.5 * u0}) {
            LaplaceSurvival ls = laplace_survival(chain, x0, M, u);
            if (!ls.near_pole) worst_gap = std::max(worst_gap, ls.rel_gap);
        }
        matrix.add("laplace_survival_two_route", true, worst_gap <= 1e-8,
                   json{{"value", io::num(worst_gap)}, {"threshold", 1e-8}});

        SurvivalSeriesCheck sc = laplace_survival_series_check(chain, x0, M, -0.2);
        matrix.add("survival_series_transform", true,
                   sc.rel_gap <= 1e-8 + sc.tail_rel,
                   json{{"value", io::num(sc.rel_gap)}, {"tail", io::num(sc.tail_rel)},
                        {"threshold", 1e-8}});

        ExpLawReport el = exponential_law_check(chain, x0, M);
        matrix.add("exponential_law", false, el.sup_dev <= 0.5, io::describe(el));
    } else {
        matrix.skip("laplace_survival_two_route", true, "no states outside the metastable set");
        matrix.skip("survival_series_transform", true, "no states outside the metastable set");
        matrix.skip("exponential_law", false, "no states outside the metastable set");
    }

    if (hier && hier->depth() >= 2 && n <= 256) {
        // Exit of the shallowest surviving well toward the deeper prefix: the
        // survival from m_{j0} should be dominated by a single pole.
        const StateSet& prefix = hier->sigma[static_cast<size_t>(hier->depth() - 1)];
        int xr = hier->m[static_cast<size_t>(hier->depth() - 1)];
        Hierarchy tail = build_hierarchy(chain, M, prefix);
        ResidueExpansion res = residue_expansion(chain, xr, tail);
        matrix.add("residue_closure", true, res.sum_error <= 1e-8,
                   json{{"value", io::num(res.sum_error)}, {"threshold", 1e-8}});
        matrix.add("residue_flux_agreement", true, res.flux_gap_scaled <= 1e-10,
                   json{{"value", io::num(res.flux_gap_scaled)},
                        {"raw_gap", io::num(res.flux_gap)},
                        {"threshold", 1e-10}});
        matrix.add("residue_remainder", true,
                   res.sup_reconstruction_error <= res.remainder_bound * (1.0 + 1e-9) + 1e-12,
                   json{{"value", io::num(res.sup_reconstruction_error)},
                        {"bound", io::num(res.remainder_bound)}});
        rep["residues"] = io::describe(res);
    } else {
        std::string why = !hier ? "degenerate hierarchy: " + hier_issue
                                : (n > 256 ? "chain too large for the scan"
                                           : "hierarchy depth below two");
        for (const char* name : {"residue_closure", "residue_flux_agreement", "residue_remainder"})
            matrix.skip(name, true, why);
    }

    matrix.add("metastable_separation", false, mspec.separation() <= 0.5,
               json{{"value", io::num(mspec.separation())}, {"threshold", 0.5}});
    {
        GenericityReport gen = check_genericity(chain, M);
        matrix.add("genericity_margin", false, gen.eps_N <= 0.5, io::describe(gen));
    }

    if (mc > 0 && x0 >= 0) {
        MCSample sample = sample_exit_times(chain, x0, M, mc, seed, jobs);
        matrix.add("mc_ks_band", false, sample.ks <= sample.band && !sample.aborted,
                   io::describe(sample));
    } else if (mc > 0) {
        matrix.skip("mc_ks_band", false, "no states outside the metastable set");
    }

    rep["checks"] = matrix.rows;
    rep["summary"] = matrix.summary();
    emit(rep);
    return matrix.exit_code();
}

json error_json(const std::string& type, const std::string& message) {
    return json{{"tool", tool_block()}, {"error", {{"type", type}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hitting transforms, capacities, metastable hierarchies, low spectra and exit"
                 " laws of finite reversible chains"};
    app.require_subcommand(1);
    int exit_code = 0;

    // build
    BuildArgs build;
    auto* cmd_build = app.add_subcommand("build", "generate a chain from a potential landscape");
    cmd_build->add_option("--spec", build.spec_path, "potential spec (JSON)");
    cmd_build->add_option("--out", build.out_path, "output chain file")->required();
    cmd_build->add_option("--preset", build.preset, "preset name instead of a spec file");
    cmd_build->add_option("--d", build.d, "dimension (1 or 2)");
    cmd_build->add_option("--N", build.N, "lattice resolution");
    auto* beta_opt = cmd_build->add_option("--beta", build.beta, "inverse-temperature factor");
    cmd_build->add_option("--dynamics", build.dynamics, "metropolis or heat_bath");
    cmd_build->add_option("--param", build.params, "preset parameter key=value");
    cmd_build->callback([&] {
        build.have_beta = beta_opt->count() > 0;
        exit_code = run_build(build);
    });

    // hit
    std::string hit_chain, hit_target, hit_avoid;
    double hit_u = 0.0;
    auto* cmd_hit = app.add_subcommand("hit", "hitting probabilities and transforms");
    cmd_hit->add_option("--chain", hit_chain, "chain file")->required();
    cmd_hit->add_option("--target", hit_target, "target states (comma list)")->required();
    cmd_hit->add_option("--avoid", hit_avoid, "avoided states (comma list)");
    auto* u_opt = cmd_hit->add_option("--u", hit_u, "transform argument");
    cmd_hit->callback([&] {
        exit_code = run_hit(hit_chain, hit_target, hit_avoid,
                            u_opt->count() ? std::optional<double>(hit_u) : std::nullopt);
    });

    // analyze
    std::string an_chain, an_members, an_csv;
    int an_auto = 0;
    auto* cmd_an = app.add_subcommand("analyze", "metastable sets, valleys, capacities, hierarchy");
    cmd_an->add_option("--chain", an_chain, "chain file")->required();
    cmd_an->add_option("--metastable", an_members, "metastable states (comma list)");
    cmd_an->add_option("--auto", an_auto, "propose a metastable set of this size");
    cmd_an->add_option("--csv", an_csv, "prefix for capacity matrix CSV export");
    cmd_an->callback([&] { exit_code = run_analyze(an_chain, an_members, an_auto, an_csv); });

    // spectrum
    std::string sp_chain, sp_exclude, sp_verify, sp_csv;
    int sp_k = 5;
    auto* cmd_sp = app.add_subcommand("spectrum", "low Dirichlet spectrum and its verification");
    cmd_sp->add_option("--chain", sp_chain, "chain file")->required();
    cmd_sp->add_option("--exclude", sp_exclude, "killed states (comma list)");
    cmd_sp->add_option("--k", sp_k, "number of eigenvalues");
    cmd_sp->add_option("--verify", sp_verify, "hierarchy JSON to verify against");
    cmd_sp->add_option("--csv", sp_csv, "CSV of determinant samples");
    cmd_sp->callback(
        [&] { exit_code = run_spectrum(sp_chain, sp_exclude, sp_k, sp_verify, sp_csv); });

    // exitlaw
    std::string el_chain, el_from, el_target, el_hier, el_csv;
    long long el_mc = 0;
    std::uint64_t el_seed = 0;
    int el_jobs = default_jobs(), el_auto = 0;
    auto* cmd_el = app.add_subcommand("exitlaw", "exit-time distribution and its expansions");
    cmd_el->add_option("--chain", el_chain, "chain file")->required();
    cmd_el->add_option("--from", el_from, "start state")->required();
    cmd_el->add_option("--target", el_target, "target states (comma list)")->required();
    cmd_el->add_option("--mc", el_mc, "Monte Carlo sample count");
    cmd_el->add_option("--seed", el_seed, "Monte Carlo seed");
    cmd_el->add_option("--jobs", el_jobs, "worker threads");
    cmd_el->add_option("--auto", el_auto, "derive residues from a proposed set of this size");
    cmd_el->add_option("--hierarchy", el_hier, "hierarchy JSON for the residue expansion");
    cmd_el->add_option("--csv", el_csv, "CSV of survival vs reconstruction");
    cmd_el->callback([&] {
        exit_code = run_exitlaw(el_chain, el_from, el_target, el_mc, el_seed, el_jobs, el_auto,
                                el_hier, el_csv);
    });

    // verify
    std::string vf_chain, vf_members;
    int vf_auto = 0, vf_jobs = default_jobs();
    long long vf_mc = 0;
    std::uint64_t vf_seed = 0;
    auto* cmd_vf = app.add_subcommand("verify", "full identity and bound matrix on one chain");
    cmd_vf->add_option("--chain", vf_chain, "chain file")->required();
    cmd_vf->add_option("--metastable", vf_members, "metastable states (comma list)");
    cmd_vf->add_option("--auto", vf_auto, "propose a metastable set of this size");
    cmd_vf->add_option("--mc", vf_mc, "Monte Carlo sample count (adds the KS row)");
    cmd_vf->add_option("--seed", vf_seed, "Monte Carlo seed");
    cmd_vf->add_option("--jobs", vf_jobs, "worker threads");
    cmd_vf->callback(
        [&] { exit_code = run_verify(vf_chain, vf_members, vf_auto, vf_mc, vf_seed, vf_jobs); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit(error_json("input", e.what()));
        return 4;
    } catch (const InputError& e) {
        emit(error_json("input", e.what()));
        return 4;
    } catch (const DomainError& e) {
        emit(error_json("domain", e.what()));
        return 3;
    } catch (const DegeneracyError& e) {
        emit(error_json("degeneracy", e.what()));
        return 3;
    } catch (const NumericalError& e) {
        emit(error_json("numerical", e.what()));
        return 3;
    } catch (const json::exception& e) {
        emit(error_json("input", e.what()));
        return 4;
    } catch (const std::exception& e) {
        emit(error_json("internal", e.what()));
        return 3;
    }
    return exit_code;
}
