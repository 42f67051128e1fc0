#include <doctest.h>

#include <cmath>

#include "metaspec/landscape.hpp"
#include "metaspec/solver.hpp"
#include "test_util.hpp"

using namespace metaspec;

TEST_CASE("preset tables match their formulas") {
    PotentialSpec spec;
    spec.N = 8;

    spec.preset = "flat";
    for (double v : potential_table(spec)) CHECK(v == 0.0);

    spec.preset = "single_well";
    spec.params["scale"] = 2.0;
    auto F = potential_table(spec);
    for (int i = 0; i <= 8; ++i) {
        double x = i / 8.0;
        CHECK(F[i] == doctest::Approx(2.0 * (x - 0.5) * (x - 0.5)).epsilon(1e-15));
    }

    spec.preset = "double_well";
    spec.params = {{"barrier", 0.3}, {"tilt", 0.07}};
    F = potential_table(spec);
    for (int i = 0; i <= 8; ++i) {
        double x = i / 8.0;
        double c = std::cos(2.0 * M_PI * x);
        CHECK(F[i] == doctest::Approx(0.3 * c * c + 0.07 * x).epsilon(1e-14));
    }

    spec.preset = "triple_well";
    spec.params = {{"barrier", 0.4}, {"tilt", 0.12}};
    F = potential_table(spec);
    for (int i = 0; i <= 8; ++i) {
        double x = i / 8.0;
        double c = std::cos(3.0 * M_PI * x);
        CHECK(F[i] == doctest::Approx(0.4 * c * c + 0.12 * x).epsilon(1e-14));
    }
}

TEST_CASE("explicit tables pass through and are checked") {
    PotentialSpec spec;
    spec.N = 4;
    spec.F = {0.0, 1.0, 0.5, 0.25, 0.125};
    CHECK(potential_table(spec) == spec.F);

    spec.F = {0.0, 1.0};
    CHECK_THROWS_AS(potential_table(spec), InputError);
    spec.F = {0.0, 1.0, 0.5, 0.25, std::nan("")};
    CHECK_THROWS_AS(potential_table(spec), InputError);
    spec.F.clear();
    spec.preset = "";
    CHECK_THROWS_AS(potential_table(spec), InputError);
    spec.preset = "quadruple_well";
    CHECK_THROWS_AS(potential_table(spec), InputError);
}

TEST_CASE("spec validation") {
    PotentialSpec spec;
    spec.preset = "flat";
    spec.N = 3;
    CHECK_THROWS_AS(build_landscape(spec), InputError);
    spec.N = 8;
    spec.d = 3;
    CHECK_THROWS_AS(build_landscape(spec), InputError);
    spec.d = 1;
    spec.dynamics = "glauber_exact";
    CHECK_THROWS_AS(build_landscape(spec), InputError);
}

TEST_CASE("metropolis rates and measure in one dimension") {
    PotentialSpec spec;
    spec.d = 1;
    spec.N = 12;
    spec.preset = "double_well";
    ChainModel chain = build_landscape(spec);
    CHECK(chain.n == 13);
    CHECK(validate(chain).ok());

    auto F = potential_table(spec);
    const double beta = 12.0;  // defaults to N
    for (int i = 0; i < chain.n; ++i) {
        for (int j : {i - 1, i + 1}) {
            if (j < 0 || j >= chain.n) continue;
            double expected = 0.5 * std::exp(std::min(0.0, -beta * (F[j] - F[i])));
            CHECK(chain.P(i, j) == doctest::Approx(expected).epsilon(1e-13));
        }
    }
    // Reflecting ends: the rejected proposal stays put.
    CHECK(chain.P(0, 0) == doctest::Approx(1.0 - chain.P(0, 1)).epsilon(1e-15));

    // Q proportional to exp(-beta F).
    for (int i = 1; i < chain.n; ++i) {
        double expected = std::exp(-beta * (F[i] - F[0]));
        CHECK(chain.Q(i) / chain.Q(0) == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(chain.label(3) == "0.25");
}

TEST_CASE("heat bath rates") {
    PotentialSpec spec;
    spec.d = 1;
    spec.N = 10;
    spec.preset = "single_well";
    spec.dynamics = "heat_bath";
    spec.beta = 3.5;
    ChainModel chain = build_landscape(spec);
    CHECK(validate(chain).ok());
    auto F = potential_table(spec);
    for (int i = 0; i + 1 < chain.n; ++i) {
        double expected = 0.5 / (1.0 + std::exp(3.5 * (F[i + 1] - F[i])));
        CHECK(chain.P(i, i + 1) == doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("flat potential gives the lazy uniform walk") {
    PotentialSpec spec;
    spec.d = 1;
    spec.N = 6;
    spec.preset = "flat";
    ChainModel chain = build_landscape(spec);
    for (int i = 0; i < chain.n; ++i) {
        CHECK(chain.Q(i) == doctest::Approx(1.0 / 7).epsilon(1e-14));
        if (i > 0) CHECK(chain.P(i, i - 1) == 0.5);
        if (i < chain.n - 1) CHECK(chain.P(i, i + 1) == 0.5);
    }
}

TEST_CASE("two-dimensional lattice") {
    PotentialSpec spec;
    spec.d = 2;
    spec.N = 5;
    spec.preset = "double_well";
    spec.params = {{"barrier", 0.2}, {"tilt", 0.05}, {"transverse", 0.7}};
    ChainModel chain = build_landscape(spec);
    CHECK(chain.n == 36);
    CHECK(validate(chain).ok());
    CHECK(chain.label(7) == "0.2,0.2");

    auto F = potential_table(spec);
    // Interior site: four proposals at rate 1/4 each.
    int idx = 2 * 6 + 3;
    double out = 0.0;
    for (int jdx : {idx - 1, idx + 1, idx - 6, idx + 6}) {
        double expected = 0.25 * std::exp(std::min(0.0, -5.0 * (F[jdx] - F[idx])));
        CHECK(chain.P(idx, jdx) == doctest::Approx(expected).epsilon(1e-13));
        out += chain.P(idx, jdx);
    }
    CHECK(chain.P(idx, idx) == doctest::Approx(1.0 - out).epsilon(1e-13));
    // Corner has two neighbors only.
    CHECK(chain.P(0, 1) > 0.0);
    CHECK(chain.P(0, 6) > 0.0);
    CHECK(chain.P(0, 7) == 0.0);
}

TEST_CASE("steep potentials fail loudly instead of underflowing") {
    PotentialSpec spec;
    spec.d = 1;
    spec.N = 64;
    spec.preset = "double_well";
    spec.params["barrier"] = 50.0;
    CHECK_THROWS_AS(build_landscape(spec), InputError);
}

TEST_CASE("series capacity agrees with the escape-probability route") {
    ChainModel chain = testutil::double_well_chain(20, 0.2, 0.08);
    for (auto [a, b] : {std::pair{0, 20}, {5, 15}, {2, 9}, {10, 11}}) {
        double series = birth_death_capacity(chain, a, b);
        // Escape route: cap(a,b) = Q(a) P[tau_b < tau_a].
        double esc = chain.Q(a) * escape_probability(chain, a, StateSet::single(b, chain.n));
        CHECK(series == doctest::Approx(esc).epsilon(1e-10));
        // And the capacity is symmetric in its endpoints.
        CHECK(birth_death_capacity(chain, b, a) == series);
    }
}

TEST_CASE("series capacity rejects non-chain graphs") {
    ChainModel chain = testutil::double_well_chain(8, 0.1, 0.02);
    CHECK_THROWS_AS(birth_death_capacity(chain, 3, 3), InputError);
    CHECK_THROWS_AS(birth_death_capacity(chain, -1, 3), InputError);

    std::mt19937_64 rng(5);
    ChainModel dense = testutil::random_reversible(6, rng, 1.0);
    CHECK_THROWS_AS(birth_death_capacity(dense, 0, 5), InputError);
}

TEST_CASE("triple-well table helper has its wells where expected") {
    ChainModel chain = testutil::triple_well_chain(64);
    CHECK(chain.n == 65);
    CHECK(validate(chain).ok());
    // Local maxima of Q at the three well bottoms.
    for (int m : {11, 32, 53}) {
        CHECK(chain.Q(m) > chain.Q(m - 1));
        CHECK(chain.Q(m) > chain.Q(m + 1));
    }
    // The 1/6 well carries the dominant mass.
    CHECK(chain.Q(11) > 0.5);
}
