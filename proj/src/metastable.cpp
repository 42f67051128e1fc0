#include "metaspec/metastable.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace metaspec {

namespace {

constexpr double kTieWindow = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// argmax with a relative tie window; returns {index, tied_index_or_-1}
std::pair<int, int> argmax_with_tie(const std::vector<double>& v) {
    int best = -1;
    for (size_t i = 0; i < v.size(); ++i)
        if (best < 0 || v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
    int tied = -1;
    for (size_t i = 0; i < v.size(); ++i) {
        if (static_cast<int>(i) == best) continue;
        if (v[i] >= v[static_cast<size_t>(best)] * (1.0 - kTieWindow)) {
            tied = static_cast<int>(i);
            break;
        }
    }
    return {best, tied};
}

}  // namespace

double hitting_scale(const ChainModel& chain, int x, const StateSet& I) {
    double p = escape_probability(chain, x, I);
    if (p <= 0.0) throw NumericalError("vanishing escape probability; chain may be reducible");
    return 1.0 / p;
}

double set_depth(const ChainModel& chain, const StateSet& M, const StateSet& I) {
    if (I.isEmpty()) return kInf;
    const StateSet rest = M.minus(I);
    if (rest.isEmpty()) throw InputError("no points of M outside I");
    double depth = 0.0;
    for (int x : rest.members()) depth = std::max(depth, hitting_scale(chain, x, I));
    return depth;
}

MetastableSpec check_metastable_set(const ChainModel& chain, const StateSet& M) {
    if (M.universe() != chain.n) throw InputError("state set universe does not match the chain");
    if (M.isEmpty()) throw InputError("metastable set must be nonempty");
    MetastableSpec spec;
    spec.M = M;

    // b_N: worst chance over starting states of reaching M no later than
    // returning to the start. A start inside M scores 1 outright (any return
    // to itself is already a return to M).
    spec.b_N = 1.0;
    for (int z = 0; z < chain.n; ++z) {
        if (M.contains(z)) continue;
        double p = escape_probability(chain, z, M);
        // First outside state seeds the witness even when every escape is
        // certain (p identically 1); afterwards only strict improvements move.
        if (spec.b_argmin < 0 || p < spec.b_N) {
            spec.b_N = p;
            spec.b_argmin = z;
        }
    }

    for (int x : M.members()) {
        for (int y : M.members()) {
            if (x == y) continue;
            double p = escape_probability(chain, x, StateSet::single(y, chain.n));
            if (p > spec.a_N_inv) {
                spec.a_N_inv = p;
                spec.a_argmax_x = x;
                spec.a_argmax_y = y;
            }
        }
    }
    return spec;
}

MetastableSpec propose_metastable_set(const ChainModel& chain, int k, double max_separation) {
    if (k < 1) throw InputError("need at least one metastable point");
    if (k > chain.n) throw InputError("requested more metastable points than states");

    int m1 = 0;
    for (int x = 1; x < chain.n; ++x)
        if (chain.Q(x) > chain.Q(m1)) m1 = x;
    StateSet M = StateSet::single(m1, chain.n);

    while (M.size() < k) {
        int best = -1;
        double best_t = -1.0;
        for (int x = 0; x < chain.n; ++x) {
            if (M.contains(x)) continue;
            double t = hitting_scale(chain, x, M);
            if (t > best_t) {
                best_t = t;
                best = x;
            }
        }
        StateSet grown = M.unite(StateSet::single(best, chain.n));
        if (std::isfinite(max_separation) &&
            check_metastable_set(chain, grown).separation() > max_separation)
            break;
        M = grown;
    }

    // Maximality of the measure inside each valley: swap any point beaten by
    // a state of its own valley.
    ValleyDecomposition dec = valleys(chain, M);
    std::vector<int> chosen;
    for (int j = 0; j < M.size(); ++j) {
        int x = M.members()[static_cast<size_t>(j)];
        int best = x;
        for (int z : dec.valley[static_cast<size_t>(j)].members())
            if (chain.Q(z) > chain.Q(best)) best = z;
        chosen.push_back(best);
    }
    return check_metastable_set(chain, StateSet(std::move(chosen), chain.n));
}

ValleyDecomposition valleys(const ChainModel& chain, const StateSet& M) {
    if (M.isEmpty()) throw InputError("metastable set must be nonempty");
    ValleyDecomposition dec;
    dec.M = M;
    const int k = M.size();
    Eigen::MatrixXd H = absorption_matrix(chain, M, 0.0);
    // One step first makes the rows the distribution of the first return to M,
    // which is what the valley definition weighs; off M this equals the plain
    // absorption split.
    dec.hit_distribution = chain.P * H;

    std::vector<std::vector<int>> members(static_cast<size_t>(k));
    std::vector<int> overlap_states;
    std::vector<std::vector<int>> claimants(static_cast<size_t>(chain.n));
    for (int z = 0; z < chain.n; ++z) {
        double top = dec.hit_distribution.row(z).maxCoeff();
        for (int j = 0; j < k; ++j)
            if (dec.hit_distribution(z, j) >= top * (1.0 - kTieWindow)) {
                members[static_cast<size_t>(j)].push_back(z);
                claimants[static_cast<size_t>(z)].push_back(j);
            }
        if (claimants[static_cast<size_t>(z)].size() >= 2) {
            overlap_states.push_back(z);
            dec.q_overlap += chain.Q(z);
        }
    }
    dec.overlap = StateSet(overlap_states, chain.n);
    dec.r_N = 0.0;
    dec.c_N_inv = kInf;
    for (int j = 0; j < k; ++j) {
        dec.valley.emplace_back(members[static_cast<size_t>(j)], chain.n);
        double qa = 0.0;
        for (int z : dec.valley.back().members()) qa += chain.Q(z);
        double r = chain.Q(M.members()[static_cast<size_t>(j)]) / qa;
        dec.R.push_back(r);
        dec.r_N = std::max(dec.r_N, r);
        dec.c_N_inv = std::min(dec.c_N_inv, r);
    }

    for (int y : overlap_states) {
        const auto& cl = claimants[static_cast<size_t>(y)];
        for (size_t a = 0; a < cl.size(); ++a) {
            for (size_t b = a + 1; b < cl.size(); ++b) {
                int m = M.members()[static_cast<size_t>(cl[a])];
                int x = M.members()[static_cast<size_t>(cl[b])];
                if (y == m || y == x) continue;
                ValleyDecomposition::OverlapCheck chk;
                chk.y = y;
                chk.m = m;
                chk.x = x;
                chk.eps = std::min(escape_probability(chain, y, StateSet::single(m, chain.n)),
                                   escape_probability(chain, y, StateSet::single(x, chain.n)));
                chk.mass = chain.Q(y);
                chk.bound = 2.0 / chk.eps * chain.Q(m) *
                            escape_probability(chain, m, StateSet::single(x, chain.n));
                chk.ok = chk.mass <= chk.bound * (1.0 + kTieWindow);
                dec.overlap_checks.push_back(chk);
            }
        }
    }
    return dec;
}

CapacityTable capacities(const ChainModel& chain, const StateSet& M) {
    if (M.size() < 2) throw InputError("capacity table needs at least two points");
    CapacityTable tab;
    tab.M = M;
    const int k = M.size();
    tab.E = Eigen::MatrixXd::Zero(k, k);
    tab.e = Eigen::MatrixXd::Zero(k, k);
    for (int a = 0; a < k; ++a) {
        int x = M.members()[static_cast<size_t>(a)];
        for (int b = 0; b < k; ++b) {
            if (a == b) continue;
            int y = M.members()[static_cast<size_t>(b)];
            tab.E(a, b) =
                chain.Q(x) * escape_probability(chain, x, StateSet::single(y, chain.n));
            tab.e(a, b) = -std::log(tab.E(a, b));
        }
    }
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            double lhs = tab.E(a, b), rhs = tab.E(b, a);
            tab.symmetry_rel_error = std::max(
                tab.symmetry_rel_error, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
        }
    tab.ultrametric_defect = -kInf;
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
            for (int c = 0; c < k; ++c) {
                if (a == b || b == c || a == c) continue;
                tab.ultrametric_defect = std::max(
                    tab.ultrametric_defect, tab.e(a, b) - std::max(tab.e(a, c), tab.e(c, b)));
            }
    if (k < 3) tab.ultrametric_defect = 0.0;

    // Two-sided comparison of capacities toward a common target set J when one
    // single capacity dominates: delta = E(m,J)/E(m,y) < 1/2 forces
    // E(m,J)/E(y,J) into [(1-2delta)/(1-delta), 1/(1-delta)].
    std::vector<std::vector<int>> j_sets;
    for (int z : M.members()) j_sets.push_back({z});
    if (k <= 6)
        for (int a = 0; a < k; ++a)
            for (int b = a + 1; b < k; ++b)
                j_sets.push_back(
                    {M.members()[static_cast<size_t>(a)], M.members()[static_cast<size_t>(b)]});
    for (int a = 0; a < k; ++a) {
        int m = M.members()[static_cast<size_t>(a)];
        for (int b = 0; b < k; ++b) {
            if (b == a) continue;
            int y = M.members()[static_cast<size_t>(b)];
            for (const auto& J : j_sets) {
                if (std::find(J.begin(), J.end(), m) != J.end() ||
                    std::find(J.begin(), J.end(), y) != J.end())
                    continue;
                StateSet Jset(J, chain.n);
                double EmJ = chain.Q(m) * escape_probability(chain, m, Jset);
                double delta = EmJ / tab.E(a, b);
                if (delta >= 0.5) continue;
                CapacityTable::Sandwich s;
                s.m = m;
                s.y = y;
                s.J = J;
                s.delta = delta;
                double EyJ = chain.Q(y) * escape_probability(chain, y, Jset);
                s.ratio = EmJ / EyJ;
                s.lo = (1.0 - 2.0 * delta) / (1.0 - delta);
                s.hi = 1.0 / (1.0 - delta);
                s.ok = s.ratio >= s.lo - kTieWindow && s.ratio <= s.hi + kTieWindow;
                tab.sandwiches.push_back(s);
            }
        }
    }
    return tab;
}

GenericityReport check_genericity(const ChainModel& chain, const StateSet& M, bool exhaustive) {
    GenericityReport rep;
    if (M.isEmpty()) throw InputError("metastable set must be nonempty");
    const int k = M.size();
    if (k == 1) return rep;  // vacuously generic

    int m1 = M.members()[0];
    for (int x : M.members())
        if (chain.Q(x) > chain.Q(m1)) m1 = x;
    for (int x : M.members()) {
        if (x == m1) continue;
        rep.worst_q_ratio = std::max(rep.worst_q_ratio, chain.Q(x) / chain.Q(m1));
    }

    // Candidate exclusion sets: all singletons plus the nested sets of the
    // default hierarchy; the full powerset only on request and only for small M.
    std::vector<std::vector<int>> candidates;
    for (int z : M.members()) candidates.push_back({z});
    if (exhaustive && k - 2 <= 12) {
        const auto& mem = M.members();
        for (unsigned long bits = 1; bits < (1ul << k); ++bits) {
            std::vector<int> set;
            for (int i = 0; i < k; ++i)
                if (bits & (1ul << i)) set.push_back(mem[static_cast<size_t>(i)]);
            if (set.size() >= 2) candidates.push_back(std::move(set));
        }
    } else {
        rep.restricted = true;
        try {
            Hierarchy h = build_hierarchy(chain, M, StateSet::empty(chain.n));
            for (size_t j = 1; j + 1 < h.sigma.size(); ++j)
                if (h.sigma[j].size() >= 2) candidates.push_back(h.sigma[j].members());
        } catch (const DegeneracyError&) {
            // ties already imply a ratio near 1; the singleton sets will find it
        }
    }

    std::map<std::pair<int, unsigned long>, double> cache;
    auto scale = [&](int x, const std::vector<int>& I, unsigned long key) {
        auto it = cache.find({x, key});
        if (it != cache.end()) return it->second;
        double t = hitting_scale(chain, x, StateSet(I, chain.n));
        cache[{x, key}] = t;
        return t;
    };
    auto set_key = [&](const std::vector<int>& I) {
        unsigned long key = 0;
        for (int z : I) {
            int pos = static_cast<int>(std::lower_bound(M.members().begin(), M.members().end(), z) -
                                       M.members().begin());
            key |= 1ul << pos;
        }
        return key;
    };

    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            int x = M.members()[static_cast<size_t>(a)];
            int y = M.members()[static_cast<size_t>(b)];
            for (const auto& I : candidates) {
                if (std::find(I.begin(), I.end(), x) != I.end() ||
                    std::find(I.begin(), I.end(), y) != I.end())
                    continue;
                unsigned long key = set_key(I);
                double tx = scale(x, I, key);
                double ty = scale(y, I, key);
                double ratio = std::min(tx, ty) / std::max(tx, ty);
                if (ratio > rep.worst_t_ratio) {
                    rep.worst_t_ratio = ratio;
                    rep.worst_x = x;
                    rep.worst_y = y;
                    rep.worst_I = I;
                }
            }
        }
    }
    rep.eps_N = std::max(rep.worst_t_ratio, rep.worst_q_ratio);
    return rep;
}

Hierarchy build_hierarchy(const ChainModel& chain, const StateSet& M, const StateSet& I0) {
    if (M.isEmpty()) throw InputError("metastable set must be nonempty");
    if (I0.universe() != chain.n || M.universe() != chain.n)
        throw InputError("state set universe does not match the chain");
    Hierarchy h;
    h.M = M;
    h.I0 = I0;
    StateSet rest = M.minus(I0);
    const int j0 = rest.size();
    if (j0 == 0) throw InputError("exclusion set already covers every metastable point");

    h.sigma.push_back(I0);
    if (I0.isEmpty()) {
        std::vector<double> q;
        for (int x : rest.members()) q.push_back(chain.Q(x));
        auto [best, tied] = argmax_with_tie(q);
        if (tied >= 0)
            throw DegeneracyError(
                "measure maximum is not unique between states " +
                chain.label(rest.members()[static_cast<size_t>(best)]) + " and " +
                chain.label(rest.members()[static_cast<size_t>(tied)]));
        h.m.push_back(rest.members()[static_cast<size_t>(best)]);
        h.T.push_back(kInf);
    } else {
        std::vector<double> t;
        for (int x : rest.members()) t.push_back(hitting_scale(chain, x, I0));
        auto [best, tied] = argmax_with_tie(t);
        if (tied >= 0)
            throw DegeneracyError("effective depth is not unique between states " +
                                  chain.label(rest.members()[static_cast<size_t>(best)]) +
                                  " and " +
                                  chain.label(rest.members()[static_cast<size_t>(tied)]));
        h.m.push_back(rest.members()[static_cast<size_t>(best)]);
        h.T.push_back(t[static_cast<size_t>(best)]);
    }
    h.sigma.push_back(I0.unite(StateSet::single(h.m[0], chain.n)));

    for (int j = 2; j <= j0; ++j) {
        const StateSet& excl = h.sigma.back();
        StateSet open = M.minus(excl);
        std::vector<double> t;
        for (int x : open.members()) t.push_back(hitting_scale(chain, x, excl));
        auto [best, tied] = argmax_with_tie(t);
        if (tied >= 0)
            throw DegeneracyError("effective depth is not unique between states " +
                                  chain.label(open.members()[static_cast<size_t>(best)]) +
                                  " and " +
                                  chain.label(open.members()[static_cast<size_t>(tied)]));
        h.m.push_back(open.members()[static_cast<size_t>(best)]);
        h.T.push_back(t[static_cast<size_t>(best)]);
        h.sigma.push_back(excl.unite(StateSet::single(h.m.back(), chain.n)));
    }

    MetastableSpec spec = check_metastable_set(chain, M);
    h.b_N = spec.b_N;
    h.T_sentinel = 1.0 / spec.b_N;

    for (int j = 1; j <= j0; ++j) {
        int mj = h.m[static_cast<size_t>(j - 1)];
        if (j == 1) {
            h.script_T.push_back(kInf);
            h.script_E.push_back(kInf);
        } else {
            double st = kInf, se = kInf;
            for (int l = 1; l < j; ++l) {
                int ml = h.m[static_cast<size_t>(l - 1)];
                st = std::min(st, hitting_scale(chain, ml, StateSet::single(mj, chain.n)) /
                                      h.T[static_cast<size_t>(j - 1)]);
                StateSet rest_j = h.sigma[static_cast<size_t>(j)].minus(StateSet::single(ml, chain.n));
                se = std::min(se, hitting_scale(chain, ml, rest_j));
            }
            h.script_T.push_back(st);
            h.script_E.push_back(se);
        }

        std::vector<int> meta;
        for (int z : I0.members()) meta.push_back(z);
        for (int z : M.members())
            if (chain.Q(z) > chain.Q(mj)) meta.push_back(z);
        StateSet meta_set(meta, chain.n);
        h.M_meta.push_back(meta_set);
        double tmeta = meta_set.isEmpty() ? kInf : hitting_scale(chain, mj, meta_set);
        h.T_meta.push_back(tmeta);
        double tj = h.T[static_cast<size_t>(j - 1)];
        if (std::isinf(tj) && std::isinf(tmeta))
            h.depth_slack.push_back(0.0);
        else
            h.depth_slack.push_back(std::abs(tj / tmeta - 1.0));
    }
    for (int j = 1; j <= j0; ++j) {
        double next = (j == j0) ? h.T_sentinel : h.T[static_cast<size_t>(j)];
        h.ratio_next.push_back(next / h.T[static_cast<size_t>(j - 1)]);
    }
    return h;
}

MeanExitReport mean_exit_time(const ChainModel& chain, const StateSet& M, int x,
                              const StateSet& J) {
    if (!M.contains(x)) throw InputError("exit start must be a metastable point");
    if (J.isEmpty()) throw InputError("exit target must be nonempty");
    if (J.contains(x)) throw InputError("exit start lies inside the target");
    for (int z : J.members())
        if (!M.contains(z)) throw InputError("exit target must consist of metastable points");

    MeanExitReport rep;
    rep.x = x;
    rep.J = J.members();
    rep.T_xJ = hitting_scale(chain, x, J);
    rep.T_J = set_depth(chain, M, J);
    bool attains = std::abs(rep.T_xJ - rep.T_J) <= kTieWindow * rep.T_J;
    bool inside_meta = true;
    for (int z : J.members())
        if (chain.Q(z) <= chain.Q(x)) inside_meta = false;
    rep.hypothesis_ok = attains || inside_meta;

    rep.exact = mean_time_conditioned(chain, J, StateSet::empty(chain.n)).values(x).real();
    ValleyDecomposition dec = valleys(chain, M);
    for (int j = 0; j < M.size(); ++j)
        if (M.members()[static_cast<size_t>(j)] == x) rep.R_x = dec.R[static_cast<size_t>(j)];
    rep.formula = rep.T_xJ / rep.R_x;
    rep.relative_gap = std::abs(rep.exact - rep.formula) / rep.exact;

    LaplaceFamily fam = laplace_family(chain, StateSet::single(x, chain.n), J, 0.0);
    rep.restricted_return = fam.dG(x);
    rep.restricted_gap = std::abs(rep.restricted_return * rep.R_x - 1.0);
    StateSet Jx = J.unite(StateSet::single(x, chain.n));
    rep.predicted_gap_scale =
        M.minus(Jx).isEmpty() ? 0.0 : set_depth(chain, M, Jx) / rep.T_J;
    return rep;
}

ConditionalBoundReport conditional_bound_check(const ChainModel& chain, const StateSet& M, int x,
                                               const StateSet& I, const StateSet& J) {
    ConditionalBoundReport rep;
    for (int z : I.members())
        if (!M.contains(z)) throw InputError("I must consist of metastable points");
    for (int z : J.members())
        if (!M.contains(z)) throw InputError("J must consist of metastable points");
    if (I.isEmpty()) throw InputError("target set must be nonempty");

    HittingSolution mt = mean_time_conditioned(chain, I, J);
    if (std::find(mt.flagged.begin(), mt.flagged.end(), x) != mt.flagged.end()) return rep;
    StateSet outside = M.minus(I.unite(J));
    if (outside.isEmpty()) return rep;

    ValleyDecomposition dec = valleys(chain, M);
    const StateSet IJ = I.unite(J);
    rep.bound = 0.0;
    for (int j = 0; j < M.size(); ++j) {
        int m = M.members()[static_cast<size_t>(j)];
        if (IJ.contains(m)) continue;
        // A reference point whose valley is empty carries no mass ratio; it
        // cannot anchor the bound.
        if (dec.valley[static_cast<size_t>(j)].isEmpty()) continue;
        double v = 1.0 / (dec.R[static_cast<size_t>(j)] * escape_probability(chain, m, IJ));
        rep.bound = std::max(rep.bound, v);
    }
    if (rep.bound <= 0.0) return rep;
    rep.lhs = mt.values(x).real();
    rep.C = rep.lhs / rep.bound;
    rep.defined = true;
    return rep;
}

}  // namespace metaspec
