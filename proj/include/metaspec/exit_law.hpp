#pragma once

#include <cstdint>
#include <vector>

#include "metaspec/chain.hpp"
#include "metaspec/metastable.hpp"
#include "metaspec/solver.hpp"

namespace metaspec {

// Exact exit-time distributions, their transforms and residue expansions,
// plus Monte Carlo sampling as an independent stochastic check.

struct SurvivalSeries {
    int x = 0;
    StateSet I{std::vector<int>{}, 1};
    std::vector<double> survival;  // survival[t] = P[exit time > t]
    bool truncated = false;
    double tail_bound = 0.0;  // estimated mass beyond the last step
    double decay = 0.0;       // terminal one-step survival ratio
    double mean = 0.0;        // sum of the series plus geometric tail
};

// Killed-operator iteration. Extends past t_min until the survival drops
// below 1e-12, or the cap is hit (then `truncated` is set).
SurvivalSeries survival_exact(const ChainModel& chain, int x, const StateSet& I,
                              long long t_min = 1, long long cap = 2000000);

struct LaplaceSurvival {
    double u = 0.0;
    double value_transform = 0.0;  // (G(x -> I)(u) - 1) / (e^u - 1)
    double value_resolvent = 0.0;  // killed-resolvent route
    double rel_gap = 0.0;
    bool near_pole = false;
};

// Transform of the survival sequence by two independent routes; u = 0 returns
// the mean through both.
LaplaceSurvival laplace_survival(const ChainModel& chain, int x, const StateSet& I, double u);

struct SurvivalSeriesCheck {
    double u = 0.0;
    double series = 0.0;     // truncated weighted sum of the survival sequence
    double transform = 0.0;  // solver route
    double rel_gap = 0.0;
    double tail_rel = 0.0;  // estimated relative truncation tail
    bool capped = false;
};

// Partial-summation identity: sum_t e^{ut} survival(t) against the transform,
// for real u below the abscissa.
SurvivalSeriesCheck laplace_survival_series_check(const ChainModel& chain, int x,
                                                  const StateSet& I, double u,
                                                  long long cap = 1000000);

struct ResidueExpansion {
    int x = 0;
    int j0 = 0;
    std::vector<double> lambda;      // all Dirichlet eigenvalues, ascending
    std::vector<double> coeff;       // survival(t) = sum_j coeff_j (1-lambda_j)^t
    std::vector<double> flux_coeff;  // same numbers from the boundary-flux form
    double flux_gap = 0.0;
    double flux_gap_scaled = 0.0;  // |coeff - flux_coeff| * lambda; flat roundoff floor
    double sum_error = 0.0;     // |sum coeff - 1|
    double leading_gap = 0.0;   // |coeff_1 - 1|
    double sup_reconstruction_error = 0.0;  // low-pole sum vs exact survival
    double remainder_bound = 0.0;           // sum |coeff_j| over j > j0
    double measured_decay = 0.0;            // fitted decay rate of the remainder
    double lambda_next = 0.0;               // eigenvalue j0+1 when present
};

// Residues of the survival transform at the low poles, with the full-spectrum
// closure and the reconstruction error against the exact series.
ResidueExpansion residue_expansion(const ChainModel& chain, int x, const Hierarchy& hierarchy);

struct ExpLawReport {
    double mean = 0.0;
    double sup_dev = 0.0;  // sup_t |P[tau > t*mean] - e^{-t}| over the grid
    double theta = 0.0;    // fitted decay rate in units of 1/mean
    long long grid_lo = 0, grid_hi = 0, grid_step = 1;
    bool capped = false;
};

ExpLawReport exponential_law_check(const ChainModel& chain, int x, const StateSet& I);

struct MCSample {
    long long count = 0;
    std::uint64_t seed = 0;
    std::vector<long long> times;  // sorted
    double ks = 0.0;
    double band = 0.0;  // 1.36 / sqrt(count)
    bool aborted = false;
};

// Seeded trajectories; stream j is derived from (seed, j) alone, so results
// do not depend on the worker count.
MCSample sample_exit_times(const ChainModel& chain, int x, const StateSet& I, long long count,
                           std::uint64_t seed, int jobs = 1);

}  // namespace metaspec
