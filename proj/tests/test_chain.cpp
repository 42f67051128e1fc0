#include <doctest.h>

#include <random>

#include "metaspec/chain.hpp"
#include "test_util.hpp"

using namespace metaspec;

TEST_CASE("state sets are canonical") {
    StateSet s({4, 1, 4, 2}, 6);
    CHECK(s.size() == 3);
    CHECK(s.members() == std::vector<int>{1, 2, 4});
    CHECK(s.contains(4));
    CHECK(!s.contains(0));
    CHECK(s.universe() == 6);

    CHECK(s.complement().members() == std::vector<int>{0, 3, 5});
    CHECK(s.unite(StateSet({0, 1}, 6)).members() == std::vector<int>{0, 1, 2, 4});
    CHECK(s.minus(StateSet({2}, 6)).members() == std::vector<int>{1, 4});
    CHECK(StateSet::full(3).members() == std::vector<int>{0, 1, 2});
    CHECK(StateSet::single(2, 5).members() == std::vector<int>{2});
    CHECK(StateSet::empty(5).isEmpty());

    CHECK_THROWS_AS(StateSet({7}, 6), InputError);
    CHECK_THROWS_AS(StateSet({-1}, 6), InputError);
    CHECK_THROWS_AS(s.unite(StateSet({0}, 7)), InputError);
}

TEST_CASE("two-state chain validates exactly") {
    ChainModel chain = testutil::two_state(0.3, 0.1);
    ValidationReport rep = validate(chain);
    CHECK(rep.ok());
    CHECK(rep.irreducible);
    CHECK(rep.max_row_sum_error <= 1e-15);
    CHECK(rep.max_detailed_balance_rel_error <= 1e-15);
    // Stationary measure has the closed form (q, p)/(p+q).
    CHECK(chain.Q(0) == doctest::Approx(0.1 / 0.4).epsilon(1e-14));
    CHECK(chain.Q(1) == doctest::Approx(0.3 / 0.4).epsilon(1e-14));
}

TEST_CASE("stationary measure solves the balance equations") {
    std::mt19937_64 rng(42);
    for (int n : {2, 3, 7, 15}) {
        ChainModel chain = testutil::random_reversible(n, rng);
        Eigen::VectorXd pi = stationary_measure(chain.P);
        CHECK((pi.transpose() * chain.P - pi.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-13));
        // The conductance construction already carries its measure.
        CHECK((pi - chain.Q).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("make_chain rejects bad input") {
    SUBCASE("row sums") {
        Eigen::MatrixXd P(2, 2);
        P << 0.5, 0.6, 0.5, 0.5;
        CHECK_THROWS_AS(make_chain(P), InputError);
    }
    SUBCASE("detailed balance") {
        // Biased 3-cycle is doubly stochastic but not reversible.
        Eigen::MatrixXd P(3, 3);
        P << 0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.8, 0.1, 0.1;
        CHECK_THROWS_AS(make_chain(P), InputError);
    }
    SUBCASE("reducible") {
        Eigen::MatrixXd P = Eigen::MatrixXd::Identity(3, 3);
        CHECK_THROWS_AS(make_chain(P), InputError);
    }
    SUBCASE("negative entry") {
        Eigen::MatrixXd P(2, 2);
        P << 1.2, -0.2, 0.3, 0.7;
        CHECK_THROWS_AS(make_chain(P), InputError);
    }
    SUBCASE("wrong measure") {
        Eigen::MatrixXd P(2, 2);
        P << 0.7, 0.3, 0.1, 0.9;
        Eigen::VectorXd q(2);
        q << 0.5, 0.5;
        CHECK_THROWS_AS(make_chain(P, q), InputError);
    }
}

TEST_CASE("labels round-trip") {
    Eigen::MatrixXd P(2, 2);
    P << 0.7, 0.3, 0.1, 0.9;
    ChainModel chain = make_chain(P, std::nullopt, {"a", "b"});
    CHECK(chain.label(0) == "a");
    CHECK(chain.index_of_label("b") == 1);
    CHECK(chain.index_of_label("zz") == -1);
    ChainModel bare = make_chain(P);
    CHECK(bare.label(1) == "1");
}

TEST_CASE("dirichlet restriction copies the right block") {
    std::mt19937_64 rng(7);
    ChainModel chain = testutil::random_reversible(6, rng);
    StateSet I({1, 4}, 6);
    DirichletOperator op = dirichlet(chain, I);
    CHECK(op.interior == std::vector<int>{0, 2, 3, 5});
    CHECK(op.dim() == 4);
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            CHECK(op.killed_p(a, b) == chain.P(op.interior[a], op.interior[b]));
    Eigen::MatrixXd omp = op.one_minus_p();
    CHECK((omp + op.killed_p - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("boundary of a killed set") {
    ChainModel chain = testutil::birth_death({1.0, 1.0, 1.0, 1.0});
    CHECK(boundary(chain, StateSet({0}, 5)).members() == std::vector<int>{1});
    CHECK(boundary(chain, StateSet({2}, 5)).members() == std::vector<int>{1, 3});
    CHECK(boundary(chain, StateSet({0, 4}, 5)).members() == std::vector<int>{1, 3});
}

TEST_CASE("symmetrized operator is exactly symmetric and similar to 1-P") {
    std::mt19937_64 rng(11);
    ChainModel chain = testutil::random_reversible(9, rng);
    StateSet I({0, 5}, 9);
    Eigen::MatrixXd S = symmetrized_dirichlet(chain, I);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);

    DirichletOperator op = dirichlet(chain, I);
    const int d = op.dim();
    Eigen::VectorXd sq(d);
    for (int a = 0; a < d; ++a) sq(a) = std::sqrt(chain.Q(op.interior[a]));
    Eigen::MatrixXd similar =
        sq.asDiagonal() * op.one_minus_p() * sq.cwiseInverse().asDiagonal();
    CHECK((S - similar).cwiseAbs().maxCoeff() <= 1e-13);
}
