#include <doctest.h>

#include <cmath>
#include <random>

#include "metaspec/exit_law.hpp"
#include "metaspec/landscape.hpp"
#include "metaspec/metastable.hpp"
#include "test_util.hpp"

using namespace metaspec;

TEST_CASE("hitting scale on the two-state chain") {
    ChainModel chain = testutil::two_state(0.2, 0.05);
    CHECK(hitting_scale(chain, 0, StateSet::single(1, 2)) == doctest::Approx(5.0).epsilon(1e-13));
    CHECK(hitting_scale(chain, 1, StateSet::single(0, 2)) == doctest::Approx(20.0).epsilon(1e-13));
    CHECK_THROWS_AS(hitting_scale(chain, 1, StateSet::single(1, 2)), InputError);
}

TEST_CASE("attachment witness survives certain escape") {
    // Bare path through the middle: both outside states reach M = {1} on the
    // first step, so b_N is exactly 1 and the argmin still names a state.
    Eigen::MatrixXd P(3, 3);
    P << 0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0;
    ChainModel chain = make_chain(P);
    MetastableSpec spec = check_metastable_set(chain, StateSet::single(1, 3));
    CHECK(spec.b_N == 1.0);
    CHECK(spec.b_argmin == 0);
}

TEST_CASE("metastable pair on the double well against the Green diagonal") {
    ChainModel chain = testutil::double_well_chain(16, 0.16, 0.1);
    StateSet M({4, 12}, chain.n);
    MetastableSpec spec = check_metastable_set(chain, M);

    // Independent route to b_N: P[tau_M <= tau_z] = 1/G(z,z) on M^c.
    GreenMatrix green = greens_function(chain, M.complement(), GreenMethod::DirectInverse);
    double b_oracle = 1.0;
    int argmin = -1;
    for (int a = 0; a < green.domain.size(); ++a) {
        double v = 1.0 / green.values(a, a);
        if (v < b_oracle) {
            b_oracle = v;
            argmin = green.domain.members()[a];
        }
    }
    CHECK(spec.b_N == doctest::Approx(b_oracle).epsilon(1e-9));
    CHECK(spec.b_argmin == argmin);

    // Independent route to a_N: series capacity over Q.
    double a01 = birth_death_capacity(chain, 4, 12) / chain.Q(4);
    double a10 = birth_death_capacity(chain, 4, 12) / chain.Q(12);
    CHECK(spec.a_N_inv == doctest::Approx(std::max(a01, a10)).epsilon(1e-9));
    CHECK(spec.separation() == doctest::Approx(spec.a_N_inv / spec.b_N).epsilon(1e-12));
    CHECK(spec.separation() < 0.5);

    MetastableSpec prop = propose_metastable_set(chain, 2);
    CHECK(prop.M.members() == std::vector<int>{4, 12});
}

TEST_CASE("valley decomposition of the double well") {
    ChainModel chain = testutil::double_well_chain(16, 0.16, 0.1);
    StateSet M({4, 12}, chain.n);
    ValleyDecomposition dec = valleys(chain, M);

    REQUIRE(dec.valley.size() == 2);
    // Everything left of the barrier top at 1/2 belongs to the deep valley.
    for (int z = 0; z <= 7; ++z) CHECK(dec.valley[0].contains(z));
    for (int z = 9; z <= 16; ++z) CHECK(dec.valley[1].contains(z));

    // Rows of the first-return split are distributions.
    for (int z = 0; z < chain.n; ++z)
        CHECK(dec.hit_distribution.row(z).sum() == doctest::Approx(1.0).epsilon(1e-11));

    // R recomputed from the decomposition itself.
    for (int j = 0; j < 2; ++j) {
        double qa = 0.0;
        for (int z : dec.valley[j].members()) qa += chain.Q(z);
        CHECK(dec.R[j] == doctest::Approx(chain.Q(M.members()[j]) / qa).epsilon(1e-13));
    }
    CHECK(dec.r_N == doctest::Approx(std::max(dec.R[0], dec.R[1])).epsilon(1e-13));
    CHECK(dec.c_N_inv == doctest::Approx(std::min(dec.R[0], dec.R[1])).epsilon(1e-13));

    double q_overlap = 0.0;
    for (int z : dec.overlap.members()) q_overlap += chain.Q(z);
    CHECK(dec.q_overlap == doctest::Approx(q_overlap).epsilon(1e-13));
    for (const auto& chk : dec.overlap_checks) CHECK(chk.ok);
}

TEST_CASE("capacity table against the series formula") {
    ChainModel chain = testutil::triple_well_chain(32);
    StateSet M({5, 16, 27}, chain.n);
    CapacityTable tab = capacities(chain, M);

    CHECK(tab.symmetry_rel_error <= 1e-9);
    for (int a = 0; a < 3; ++a) {
        CHECK(tab.E(a, a) == 0.0);
        for (int b = 0; b < 3; ++b) {
            if (a == b) continue;
            double series =
                birth_death_capacity(chain, M.members()[a], M.members()[b]);
            CHECK(tab.E(a, b) == doctest::Approx(series).epsilon(1e-9));
            CHECK(tab.e(a, b) == doctest::Approx(-std::log(tab.E(a, b))).epsilon(1e-12));
        }
    }
    CHECK(tab.ultrametric_defect <= std::log(3.0) + 1e-9);
    for (const auto& s : tab.sandwiches) {
        CHECK(s.delta < 0.5);
        CHECK(s.ok);
        CHECK(s.lo <= s.ratio);
        CHECK(s.ratio <= s.hi);
    }
}

TEST_CASE("genericity is clean on the asymmetric triple well") {
    ChainModel chain = testutil::triple_well_chain(64);
    StateSet M({11, 32, 53}, chain.n);
    GenericityReport rep = check_genericity(chain, M, true);
    CHECK(!rep.restricted);
    CHECK(rep.eps_N > 0.0);
    CHECK(rep.eps_N < 0.01);
    CHECK(rep.worst_q_ratio < 0.01);
}

TEST_CASE("symmetric wells are degenerate") {
    // tilt = 0 makes the two wells exchangeable; depth argmaxes tie.
    ChainModel chain = testutil::double_well_chain(16, 0.2, 0.0);
    StateSet M({4, 12}, chain.n);
    GenericityReport rep = check_genericity(chain, M);
    CHECK(rep.eps_N > 0.9);
    CHECK_THROWS_AS(build_hierarchy(chain, M, StateSet::empty(chain.n)), DegeneracyError);
}

TEST_CASE("hierarchy of the triple well") {
    ChainModel chain = testutil::triple_well_chain(64);
    StateSet M({11, 32, 53}, chain.n);
    Hierarchy h = build_hierarchy(chain, M, StateSet::empty(chain.n));

    REQUIRE(h.depth() == 3);
    CHECK(h.m == std::vector<int>{11, 32, 53});
    CHECK(h.sigma[0].isEmpty());
    CHECK(h.sigma[1].members() == std::vector<int>{11});
    CHECK(h.sigma[2].members() == std::vector<int>{11, 32});
    CHECK(h.sigma[3].members() == std::vector<int>{11, 32, 53});

    CHECK(std::isinf(h.T[0]));
    CHECK(h.T[1] > h.T[2]);
    CHECK(h.T[2] > h.T_sentinel);
    MetastableSpec spec = check_metastable_set(chain, M);
    CHECK(h.b_N == doctest::Approx(spec.b_N).epsilon(1e-12));
    CHECK(h.T_sentinel == doctest::Approx(1.0 / spec.b_N).epsilon(1e-12));

    // Depth scales: T_j against the hitting scale recomputed directly.
    CHECK(h.T[1] == doctest::Approx(hitting_scale(chain, 32, h.sigma[1])).epsilon(1e-12));
    CHECK(h.T[2] == doctest::Approx(hitting_scale(chain, 53, h.sigma[2])).epsilon(1e-12));

    for (size_t j = 1; j < h.script_T.size(); ++j) CHECK(h.script_T[j] > 10.0);
    CHECK(h.ratio_next[0] < 0.1);
    CHECK(h.ratio_next[1] < 0.1);

    // M_meta is the higher-measure prefix here, so the slack is tiny.
    for (size_t j = 1; j < h.M_meta.size(); ++j) {
        std::vector<int> expect;
        for (int mm : M.members())
            if (chain.Q(mm) > chain.Q(h.m[j])) expect.push_back(mm);
        CHECK(h.M_meta[j].members() == expect);
        CHECK(h.depth_slack[j] <= 1e-9);
    }
}

TEST_CASE("hierarchy keyed to a nonempty root set") {
    ChainModel chain = testutil::double_well_chain(16, 0.16, 0.1);
    StateSet M({4, 12}, chain.n);
    Hierarchy h = build_hierarchy(chain, M, StateSet::single(4, chain.n));
    REQUIRE(h.depth() == 1);
    CHECK(h.m == std::vector<int>{12});
    CHECK(h.I0.members() == std::vector<int>{4});
    CHECK(std::isfinite(h.T[0]));
    CHECK(h.T[0] == doctest::Approx(hitting_scale(chain, 12, h.I0)).epsilon(1e-12));
}

TEST_CASE("mean exit formula against the survival series") {
    ChainModel chain = testutil::double_well_chain(16, 0.16, 0.1);
    StateSet M({4, 12}, chain.n);
    StateSet J = StateSet::single(4, chain.n);
    MeanExitReport rep = mean_exit_time(chain, M, 12, J);

    CHECK(rep.hypothesis_ok);
    // Exact mean recomputed by iterating the killed operator.
    SurvivalSeries sur = survival_exact(chain, 12, J);
    CHECK(!sur.truncated);
    CHECK(rep.exact == doctest::Approx(sur.mean).epsilon(1e-9));
    // The valley formula T/R is an approximation with a controlled error.
    CHECK(rep.formula == doctest::Approx(rep.T_xJ / rep.R_x).epsilon(1e-13));
    CHECK(rep.relative_gap < 0.1);
    CHECK(rep.restricted_gap < 0.1);
    CHECK(rep.predicted_gap_scale < 0.1);

    ChainModel two = testutil::two_state(0.25, 0.1);
    MeanExitReport r2 =
        mean_exit_time(two, StateSet::full(2), 0, StateSet::single(1, 2));
    CHECK(r2.exact == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("conditional bound report records a finite constant") {
    // The two-state case saturates the bound exactly: both sides are 1/p.
    ChainModel two = testutil::two_state(0.2, 0.07);
    ConditionalBoundReport r2 = conditional_bound_check(
        two, StateSet::full(2), 0, StateSet::single(1, 2), StateSet::empty(2));
    REQUIRE(r2.defined);
    CHECK(r2.lhs == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(r2.bound == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(r2.C == doctest::Approx(1.0).epsilon(1e-11));

    std::mt19937_64 rng(808);
    int defined = 0;
    for (int trial = 0; trial < 40; ++trial) {
        int n = 5 + static_cast<int>(rng() % 12);
        ChainModel chain = testutil::random_reversible(n, rng);
        MetastableSpec prop = propose_metastable_set(chain, std::min(3, n / 2));
        const auto& mem = prop.M.members();
        StateSet I = StateSet::single(mem[0], n);
        StateSet J = mem.size() > 2 ? StateSet::single(mem[2], n) : StateSet::empty(n);
        for (int x = 0; x < n; ++x) {
            if (prop.M.contains(x)) continue;
            ConditionalBoundReport rep = conditional_bound_check(chain, prop.M, x, I, J);
            if (!rep.defined) continue;
            ++defined;
            CHECK(std::isfinite(rep.C));
            CHECK(rep.C > 0.0);
            CHECK(rep.C == doctest::Approx(rep.lhs / rep.bound).epsilon(1e-12));
        }
    }
    CHECK(defined > 100);
}

TEST_CASE("conditioned and plain exit means obey the global cap") {
    // E[tau_I | tau_I <= tau_{M\I}] and E[tau_M] are both at most
    // 3 n / b_N on every chain.
    std::mt19937_64 rng(117);
    for (int trial = 0; trial < 15; ++trial) {
        int n = 5 + static_cast<int>(rng() % 12);
        ChainModel chain = testutil::random_reversible(n, rng);
        MetastableSpec prop = propose_metastable_set(chain, 2 + static_cast<int>(rng() % 2));
        double cap = 3.0 * n / prop.b_N;

        HittingSolution plain =
            mean_time_conditioned(chain, prop.M, StateSet::empty(n));
        for (int x = 0; x < n; ++x) CHECK(plain.values(x).real() <= cap * (1.0 + 1e-12));

        const auto& mem = prop.M.members();
        for (size_t pick = 0; pick < mem.size(); ++pick) {
            StateSet I = StateSet::single(mem[pick], n);
            HittingSolution cond = mean_time_conditioned(chain, I, prop.M.minus(I));
            for (int x = 0; x < n; ++x) {
                if (std::find(cond.flagged.begin(), cond.flagged.end(), x) !=
                    cond.flagged.end())
                    continue;
                CHECK(cond.values(x).real() <= cap * (1.0 + 1e-12));
            }
        }
    }
}
