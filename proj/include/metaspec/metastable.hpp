#pragma once

#include <limits>
#include <string>
#include <vector>

#include "metaspec/chain.hpp"
#include "metaspec/solver.hpp"

namespace metaspec {

// T_{x,I} = 1 / P[tau_I <= tau_x], the return-weighted time scale for x to
// reach I; x must lie outside I.
double hitting_scale(const ChainModel& chain, int x, const StateSet& I);

// T_I = max over x in M\I of T_{x,I}. Infinite when I is empty.
double set_depth(const ChainModel& chain, const StateSet& M, const StateSet& I);

struct MetastableSpec {
    StateSet M;
    double a_N_inv = 0.0;  // max_{x != y in M} P[tau_y < tau_x]
    double b_N = 1.0;      // min_z P[tau_M <= tau_z]; states inside M score 1
    int b_argmin = -1;     // state attaining b_N, -1 when M covers everything
    int a_argmax_x = -1, a_argmax_y = -1;

    double separation() const { return a_N_inv / b_N; }
};

MetastableSpec check_metastable_set(const ChainModel& chain, const StateSet& M);

// Greedy proposal: seed with argmax Q, then repeatedly adopt the state of
// largest T_{x,M}; stop at k points or when separation exceeds the threshold.
// Each chosen point is finally swapped with its valley's Q-argmax so the
// measure is maximal inside its own valley.
MetastableSpec propose_metastable_set(
    const ChainModel& chain, int k,
    double max_separation = std::numeric_limits<double>::infinity());

struct ValleyDecomposition {
    StateSet M;
    std::vector<StateSet> valley;      // aligned with M.members()
    StateSet overlap;                  // states claimed by several valleys
    double q_overlap = 0.0;
    Eigen::MatrixXd hit_distribution;  // n x |M|: chance the first return to M lands there
    std::vector<double> R;             // Q(x)/Q(A(x)) per member
    double r_N = 0.0;
    double c_N_inv = 0.0;

    // Mass bound for doubly-attracted states: with eps the smaller of the two
    // single-point escape probabilities, Q(y) <= 2 eps^{-1} Q(m) P[tau_x < tau_m].
    struct OverlapCheck {
        int y = -1, m = -1, x = -1;
        double eps = 0.0, mass = 0.0, bound = 0.0;
        bool ok = false;
    };
    std::vector<OverlapCheck> overlap_checks;
};

ValleyDecomposition valleys(const ChainModel& chain, const StateSet& M);

struct CapacityTable {
    StateSet M;
    Eigen::MatrixXd E;  // capacities Q(x)/T_{x,y}; zero diagonal
    Eigen::MatrixXd e;  // -ln E off-diagonal, 0 on it
    double symmetry_rel_error = 0.0;
    double ultrametric_defect = 0.0;  // max e(x,y) - max(e(x,z), e(z,y)); should stay below ln 3

    struct Sandwich {
        int m = -1, y = -1;
        std::vector<int> J;
        double delta = 0.0;  // E(m,J)/E(m,y), only kept when < 1/2
        double ratio = 0.0;  // E(m,J)/E(y,J)
        double lo = 0.0, hi = 0.0;
        bool ok = false;
    };
    std::vector<Sandwich> sandwiches;
};

CapacityTable capacities(const ChainModel& chain, const StateSet& M);

struct GenericityReport {
    double eps_N = 0.0;
    double worst_t_ratio = 0.0;  // min/max over the tested T pairs
    int worst_x = -1, worst_y = -1;
    std::vector<int> worst_I;
    double worst_q_ratio = 0.0;  // max Q(x)/Q(m1) over x != m1
    bool restricted = false;     // sets limited to hierarchy prefixes + singletons
};

GenericityReport check_genericity(const ChainModel& chain, const StateSet& M,
                                  bool exhaustive = false);

struct Hierarchy {
    StateSet M, I0;
    std::vector<int> m;            // m_1 .. m_{j0}
    std::vector<StateSet> sigma;   // Sigma_0 .. Sigma_{j0}
    std::vector<double> T;         // T_1 .. T_{j0}; T_1 infinite when I0 is empty
    double T_sentinel = 0.0;       // T_{j0+1} = 1/b_N
    double b_N = 1.0;
    std::vector<double> script_T;  // min_k<j T_{m_k,m_j} / T_j; infinity at j=1
    std::vector<double> script_E;  // min_l<j T_{m_l, Sigma_j \ m_l}; infinity at j=1
    std::vector<double> T_meta;    // T_{m_j, M_meta_j}
    std::vector<StateSet> M_meta;  // I0 + { m' : Q(m') > Q(m_j) }
    std::vector<double> depth_slack;  // |T_j / T_meta_j - 1|
    std::vector<double> ratio_next;   // T_{j+1}/T_j, sentinel-terminated

    int depth() const { return static_cast<int>(m.size()); }
};

// Deterministic nested construction; near-ties (relative 1e-9) in any argmax
// raise DegeneracyError since uniqueness is required for the hierarchy to
// mean anything.
Hierarchy build_hierarchy(const ChainModel& chain, const StateSet& M, const StateSet& I0);

struct MeanExitReport {
    int x = -1;
    std::vector<int> J;
    bool hypothesis_ok = false;  // T_{x,J} = T_J (or J inside the higher-measure set)
    double exact = 0.0;          // E[tau_J] from the solver
    double formula = 0.0;        // T_{x,J} / R_x
    double relative_gap = 0.0;
    double T_xJ = 0.0, T_J = 0.0, R_x = 0.0;
    // Restricted return expectation E[tau_x ; tau_x < tau_J] compared with 1/R_x,
    // with the predicted error scale T_{J+x}/T_J.
    double restricted_return = 0.0;
    double restricted_gap = 0.0;
    double predicted_gap_scale = 0.0;
};

MeanExitReport mean_exit_time(const ChainModel& chain, const StateSet& M, int x,
                              const StateSet& J);

struct ConditionalBoundReport {
    bool defined = false;  // false when the conditioning event is null at x or
                           // no reference point exists in M \ (I u J)
    double lhs = 0.0;      // E[tau_I | tau_I <= tau_J] at x
    double bound = 0.0;    // sup_m (R_m P[tau_{IuJ} < tau_m])^{-1}
    double C = 0.0;        // lhs / bound
};

ConditionalBoundReport conditional_bound_check(const ChainModel& chain, const StateSet& M, int x,
                                               const StateSet& I, const StateSet& J);

}  // namespace metaspec
