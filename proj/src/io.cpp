#include "metaspec/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace metaspec::io {

json num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double num_from(const json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw InputError("unrecognized numeric string '" + s + "'");
    }
    return j.get<double>();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << data;
}

std::string digest_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json file_stamp(const std::string& path) {
    return json{{"path", path}, {"digest", digest_hex(read_file(path))}};
}

std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

json chain_to_json(const ChainModel& chain) {
    json j;
    j["labels"] = chain.labels;
    json rows = json::array();
    for (int a = 0; a < chain.n; ++a) {
        json row = json::array();
        for (int b = 0; b < chain.n; ++b) row.push_back(chain.P(a, b));
        rows.push_back(std::move(row));
    }
    j["P"] = std::move(rows);
    json q = json::array();
    for (int a = 0; a < chain.n; ++a) q.push_back(chain.Q(a));
    j["Q"] = std::move(q);
    return j;
}

ChainModel chain_from_json(const json& j) {
    if (!j.contains("P") || !j["P"].is_array()) throw InputError("chain file lacks a P matrix");
    const auto& rows = j["P"];
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd P(n, n);
    for (int a = 0; a < n; ++a) {
        if (!rows[static_cast<size_t>(a)].is_array() ||
            static_cast<int>(rows[static_cast<size_t>(a)].size()) != n)
            throw InputError("P matrix is not square");
        for (int b = 0; b < n; ++b)
            P(a, b) = rows[static_cast<size_t>(a)][static_cast<size_t>(b)].get<double>();
    }
    std::optional<Eigen::VectorXd> Q;
    if (j.contains("Q") && !j["Q"].is_null()) {
        if (static_cast<int>(j["Q"].size()) != n) throw InputError("Q length does not match P");
        Eigen::VectorXd q(n);
        for (int a = 0; a < n; ++a) q(a) = j["Q"][static_cast<size_t>(a)].get<double>();
        Q = q;
    }
    std::vector<std::string> labels;
    if (j.contains("labels")) labels = j["labels"].get<std::vector<std::string>>();
    return make_chain(P, Q, labels);
}

static ChainModel chain_from_csv(const std::string& path, const std::string& q_csv) {
    std::istringstream in(read_file(path));
    std::string line;
    struct Edge {
        int a, b;
        double p;
    };
    std::vector<Edge> edges;
    int n = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        Edge e{};
        if (!(ls >> e.a >> e.b >> e.p)) throw InputError("bad edge line: " + line);
        n = std::max({n, e.a + 1, e.b + 1});
        edges.push_back(e);
    }
    if (n == 0) throw InputError("empty edge list " + path);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : edges) P(e.a, e.b) = e.p;
    std::optional<Eigen::VectorXd> Q;
    if (!q_csv.empty()) {
        std::istringstream qin(read_file(q_csv));
        std::vector<double> qv;
        double v;
        while (qin >> v) qv.push_back(v);
        if (static_cast<int>(qv.size()) != n) throw InputError("Q length does not match edge list");
        Q = Eigen::Map<Eigen::VectorXd>(qv.data(), n);
    }
    return make_chain(P, Q, {});
}

ChainModel load_chain(const std::string& path, const std::string& q_csv) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
        return chain_from_csv(path, q_csv);
    return chain_from_json(json::parse(read_file(path)));
}

void save_chain(const ChainModel& chain, const std::string& path) {
    write_file(path, canonical_dump(chain_to_json(chain)));
}

PotentialSpec potential_from_json(const json& j) {
    PotentialSpec spec;
    if (j.contains("d")) spec.d = j["d"].get<int>();
    if (j.contains("N")) spec.N = j["N"].get<int>();
    if (j.contains("preset")) spec.preset = j["preset"].get<std::string>();
    if (j.contains("params"))
        for (auto it = j["params"].begin(); it != j["params"].end(); ++it)
            spec.params[it.key()] = it.value().get<double>();
    if (j.contains("F")) spec.F = j["F"].get<std::vector<double>>();
    if (j.contains("dynamics")) spec.dynamics = j["dynamics"].get<std::string>();
    if (j.contains("beta")) spec.beta = j["beta"].get<double>();
    return spec;
}

PotentialSpec load_potential(const std::string& path) {
    return potential_from_json(json::parse(read_file(path)));
}

namespace {

json int_array(const std::vector<int>& v) {
    json a = json::array();
    for (int x : v) a.push_back(x);
    return a;
}

json num_array(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

json vec_array(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
    return a;
}

json mat_array(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
        json row = json::array();
        for (Eigen::Index b = 0; b < m.cols(); ++b) row.push_back(num(m(a, b)));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

json describe(const ValidationReport& rep) {
    return json{{"ok", rep.ok()},
                {"irreducible", rep.irreducible},
                {"max_row_sum_error", num(rep.max_row_sum_error)},
                {"max_detailed_balance_rel_error", num(rep.max_detailed_balance_rel_error)},
                {"q_sum_error", num(rep.q_sum_error)},
                {"min_q", num(rep.min_q)},
                {"violations", [&] {
                     json v = json::array();
                     for (const auto& issue : rep.violations)
                         v.push_back(json{{"what", issue.what}, {"residual", num(issue.residual)}});
                     return v;
                 }()}};
}

json describe(const HittingSolution& sol, const ChainModel& chain) {
    (void)chain;
    json j;
    j["kind"] = sol.kind;
    j["target"] = int_array(sol.target.members());
    j["avoid"] = int_array(sol.avoid.members());
    j["u"] = num(sol.u.real());
    if (sol.u.imag() != 0.0) j["u_imag"] = num(sol.u.imag());
    j["values"] = vec_array(sol.real_values());
    if (sol.values.imag().cwiseAbs().maxCoeff() > 0.0)
        j["values_imag"] = vec_array(sol.values.imag());
    j["residual"] = num(sol.residual);
    j["trivial"] = sol.trivial;
    if (sol.kind == "mean-time") {
        j["cross_check"] = num(sol.cross_check);
        j["flagged"] = int_array(sol.flagged);
    }
    return j;
}

json describe(const MetastableSpec& spec, const ChainModel& chain) {
    json j;
    j["set"] = int_array(spec.M.members());
    json labels = json::array();
    for (int m : spec.M.members()) labels.push_back(chain.label(m));
    j["labels"] = labels;
    j["a_inv"] = num(spec.a_N_inv);
    j["b"] = num(spec.b_N);
    j["b_argmin"] = spec.b_argmin;
    j["a_argmax"] = json::array({spec.a_argmax_x, spec.a_argmax_y});
    j["separation"] = num(spec.separation());
    return j;
}

json describe(const ValleyDecomposition& dec, const ChainModel& chain) {
    (void)chain;
    json j;
    j["set"] = int_array(dec.M.members());
    json valleys = json::array();
    for (const auto& v : dec.valley) valleys.push_back(int_array(v.members()));
    j["valleys"] = valleys;
    j["overlap"] = int_array(dec.overlap.members());
    j["q_overlap"] = num(dec.q_overlap);
    j["R"] = num_array(dec.R);
    j["r_max"] = num(dec.r_N);
    j["r_min"] = num(dec.c_N_inv);
    json checks = json::array();
    for (const auto& c : dec.overlap_checks)
        checks.push_back(json{{"y", c.y},
                              {"m", c.m},
                              {"x", c.x},
                              {"eps", num(c.eps)},
                              {"mass", num(c.mass)},
                              {"bound", num(c.bound)},
                              {"ok", c.ok}});
    j["overlap_checks"] = checks;
    return j;
}

json describe(const CapacityTable& tab, const ChainModel& chain) {
    (void)chain;
    json j;
    j["set"] = int_array(tab.M.members());
    j["E"] = mat_array(tab.E);
    j["e"] = mat_array(tab.e);
    j["symmetry_rel_error"] = num(tab.symmetry_rel_error);
    j["ultrametric_defect"] = num(tab.ultrametric_defect);
    json sands = json::array();
    for (const auto& s : tab.sandwiches)
        sands.push_back(json{{"m", s.m},
                             {"y", s.y},
                             {"J", int_array(s.J)},
                             {"delta", num(s.delta)},
                             {"ratio", num(s.ratio)},
                             {"lo", num(s.lo)},
                             {"hi", num(s.hi)},
                             {"ok", s.ok}});
    j["sandwiches"] = sands;
    return j;
}

json describe(const GenericityReport& rep) {
    return json{{"eps", num(rep.eps_N)},
                {"worst_t_ratio", num(rep.worst_t_ratio)},
                {"worst_pair", json::array({rep.worst_x, rep.worst_y})},
                {"worst_exclusion", int_array(rep.worst_I)},
                {"worst_q_ratio", num(rep.worst_q_ratio)},
                {"restricted", rep.restricted}};
}

json describe(const Hierarchy& h, const ChainModel& chain) {
    (void)chain;
    json j;
    j["set"] = int_array(h.M.members());
    j["exclusion"] = int_array(h.I0.members());
    j["order"] = int_array(h.m);
    json sigma = json::array();
    for (const auto& s : h.sigma) sigma.push_back(int_array(s.members()));
    j["prefixes"] = sigma;
    j["T"] = num_array(h.T);
    j["T_sentinel"] = num(h.T_sentinel);
    j["b"] = num(h.b_N);
    j["relative_depth"] = num_array(h.script_T);
    j["exchange_depth"] = num_array(h.script_E);
    j["T_meta"] = num_array(h.T_meta);
    json meta = json::array();
    for (const auto& s : h.M_meta) meta.push_back(int_array(s.members()));
    j["M_meta"] = meta;
    j["depth_slack"] = num_array(h.depth_slack);
    j["ratio_next"] = num_array(h.ratio_next);
    return j;
}

Hierarchy hierarchy_from_json(const json& j, const ChainModel& chain) {
    auto set_of = [&](const json& a) {
        return StateSet(a.get<std::vector<int>>(), chain.n);
    };
    auto nums = [&](const json& a) {
        std::vector<double> v;
        for (const auto& e : a) v.push_back(num_from(e));
        return v;
    };
    Hierarchy h;
    h.M = set_of(j.at("set"));
    h.I0 = set_of(j.at("exclusion"));
    h.m = j.at("order").get<std::vector<int>>();
    for (const auto& s : j.at("prefixes")) h.sigma.push_back(set_of(s));
    h.T = nums(j.at("T"));
    h.T_sentinel = num_from(j.at("T_sentinel"));
    h.b_N = num_from(j.at("b"));
    h.script_T = nums(j.at("relative_depth"));
    h.script_E = nums(j.at("exchange_depth"));
    h.T_meta = nums(j.at("T_meta"));
    for (const auto& s : j.at("M_meta")) h.M_meta.push_back(set_of(s));
    h.depth_slack = nums(j.at("depth_slack"));
    h.ratio_next = nums(j.at("ratio_next"));
    return h;
}

json describe(const MeanExitReport& rep) {
    return json{{"start", rep.x},
                {"target", int_array(rep.J)},
                {"hypothesis_ok", rep.hypothesis_ok},
                {"exact", num(rep.exact)},
                {"formula", num(rep.formula)},
                {"relative_gap", num(rep.relative_gap)},
                {"T_start", num(rep.T_xJ)},
                {"T_set", num(rep.T_J)},
                {"R_start", num(rep.R_x)},
                {"restricted_return", num(rep.restricted_return)},
                {"restricted_gap", num(rep.restricted_gap)},
                {"predicted_gap_scale", num(rep.predicted_gap_scale)}};
}

json describe(const IdentityReport& rep) {
    return json{{"strong_markov", num(rep.strong_markov)},
                {"one_step", num(rep.one_step)},
                {"derivative", num(rep.derivative)},
                {"derivative_fd", num(rep.derivative_fd)},
                {"renewal", num(rep.renewal)},
                {"reversibility", num(rep.reversibility)},
                {"linear_residual", num(rep.linear_residual)},
                {"max", num(rep.max_identity_residual())}};
}

json describe(const SpectralReport& rep) {
    json j;
    j["exclusion"] = int_array(rep.I.members());
    j["eigenvalues"] = num_array(rep.eigenvalues);
    j["ortho_error"] = num(rep.ortho_error);
    j["max_residual"] = num(rep.max_residual);
    if (rep.j0 >= 0) {
        j["j0"] = rep.j0;
        j["window_count"] = rep.window_count;
        j["window_boundary"] = num(rep.window_boundary);
        j["gap_ratio"] = num(rep.gap_ratio);
        j["in_regime"] = rep.in_regime;
        j["interlacing_ok"] = rep.interlacing_ok;
        j["left_residual"] = num(rep.left_residual);
        json pairs = json::array();
        for (const auto& p : rep.pairing)
            pairs.push_back(json{{"j", p.j},
                                 {"m", p.m},
                                 {"lambda", num(p.lambda)},
                                 {"lambda_prefix", num(p.lambda_sigma)},
                                 {"inv_mean", num(p.inv_mean)},
                                 {"dev_prefix", num(p.dev_sigma)},
                                 {"dev_mean", num(p.dev_mean)},
                                 {"predicted_scale", num(p.predicted_scale)},
                                 {"measured_C", num(p.measured_C)},
                                 {"closure_error", num(p.closure_error)},
                                 {"phi_at_m", num_array(p.phi_at_m)},
                                 {"localization_max", num(p.localization_max)},
                                 {"committor_dev", num(p.committor_dev)}});
        j["pairing"] = pairs;
    }
    return j;
}

json describe(const std::vector<DetRoot>& roots) {
    json arr = json::array();
    for (const auto& r : roots)
        arr.push_back(json{{"lambda", num(r.lambda)},
                           {"u", num(r.u)},
                           {"residual", num(r.residual)},
                           {"kernel_gap", num(r.kernel_gap)}});
    return arr;
}

json describe(const DvReport& rep) {
    return json{{"lambda", num(rep.lambda)},
                {"max_mean_time", num(rep.max_mean_time)},
                {"argmax", rep.argmax},
                {"product", num(rep.product)}};
}

json describe(const DualityReport& rep) {
    return json{{"m", rep.m},
                {"lambda", num(rep.lambda_I)},
                {"u", num(rep.u_I)},
                {"mean_time", num(rep.mean_time)},
                {"product_dev", num(rep.product_dev)},
                {"capacity_form_dev", num(rep.capacity_form_dev)},
                {"closure_error", num(rep.closure_error)},
                {"slope_fd", num(rep.slope_fd)},
                {"slope_solver", num(rep.slope_solver)},
                {"slope_rel_error", num(rep.slope_rel_error)},
                {"restricted_mean", num(rep.restricted_mean)},
                {"linearization_dev", num(rep.linearization_dev)},
                {"predicted_scale", num(rep.predicted_scale)}};
}

json describe(const SurvivalSeries& s, std::size_t max_points) {
    json j;
    j["start"] = s.x;
    j["target"] = int_array(s.I.members());
    j["length"] = s.survival.size();
    j["truncated"] = s.truncated;
    j["tail_bound"] = num(s.tail_bound);
    j["decay"] = num(s.decay);
    j["mean"] = num(s.mean);
    std::size_t stride = s.survival.size() > max_points
                             ? (s.survival.size() + max_points - 1) / max_points
                             : 1;
    j["stride"] = stride;
    json vals = json::array();
    for (std::size_t t = 0; t < s.survival.size(); t += stride) vals.push_back(num(s.survival[t]));
    j["survival"] = vals;
    return j;
}

json describe(const LaplaceSurvival& l) {
    return json{{"u", num(l.u)},
                {"transform", num(l.value_transform)},
                {"resolvent", num(l.value_resolvent)},
                {"rel_gap", num(l.rel_gap)},
                {"near_pole", l.near_pole}};
}

json describe(const ResidueExpansion& r) {
    json j;
    j["start"] = r.x;
    j["j0"] = r.j0;
    json low = json::array();
    for (int i = 0; i < r.j0 && i < static_cast<int>(r.coeff.size()); ++i)
        low.push_back(json{{"lambda", num(r.lambda[static_cast<size_t>(i)])},
                           {"residue", num(-r.coeff[static_cast<size_t>(i)])}});
    j["low_poles"] = low;
    j["sum_error"] = num(r.sum_error);
    j["leading_gap"] = num(r.leading_gap);
    j["flux_gap"] = num(r.flux_gap);
    j["flux_gap_scaled"] = num(r.flux_gap_scaled);
    j["sup_reconstruction_error"] = num(r.sup_reconstruction_error);
    j["remainder_bound"] = num(r.remainder_bound);
    j["measured_decay"] = num(r.measured_decay);
    j["lambda_next"] = num(r.lambda_next);
    return j;
}

json describe(const ExpLawReport& r) {
    return json{{"mean", num(r.mean)},
                {"sup_dev", num(r.sup_dev)},
                {"theta", num(r.theta)},
                {"grid_lo", r.grid_lo},
                {"grid_hi", r.grid_hi},
                {"grid_step", r.grid_step},
                {"capped", r.capped}};
}

json describe(const MCSample& mc) {
    json j;
    j["count"] = mc.count;
    j["seed"] = mc.seed;
    j["ks"] = num(mc.ks);
    j["band"] = num(mc.band);
    j["within_band"] = mc.ks <= mc.band;
    j["aborted"] = mc.aborted;
    j["min"] = mc.times.front();
    j["max"] = mc.times.back();
    double meansum = 0.0;
    for (long long t : mc.times) meansum += static_cast<double>(t);
    j["sample_mean"] = num(meansum / static_cast<double>(mc.count));
    return j;
}

}  // namespace metaspec::io
