#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "metaspec/errors.hpp"

namespace metaspec {

// Subset of {0..n-1} with a fixed universe size. Members are kept sorted so
// every derived object (complements, reports, JSON output) is canonical.
class StateSet {
public:
    StateSet() : n_(0) {}
    StateSet(std::vector<int> members, int universe);

    static StateSet empty(int universe) { return StateSet({}, universe); }
    static StateSet single(int x, int universe) { return StateSet({x}, universe); }
    static StateSet full(int universe);

    bool contains(int x) const { return x >= 0 && x < n_ && mask_[static_cast<size_t>(x)]; }
    int size() const { return static_cast<int>(members_.size()); }
    bool isEmpty() const { return members_.empty(); }
    int universe() const { return n_; }
    const std::vector<int>& members() const { return members_; }

    StateSet complement() const;
    StateSet unite(const StateSet& other) const;
    StateSet minus(const StateSet& other) const;

    bool operator==(const StateSet& o) const { return n_ == o.n_ && members_ == o.members_; }

private:
    int n_;
    std::vector<int> members_;
    std::vector<char> mask_;
};

struct ValidationIssue {
    std::string what;
    double residual;
};

struct ValidationReport {
    double max_row_sum_error = 0.0;
    double max_detailed_balance_rel_error = 0.0;
    double q_sum_error = 0.0;
    double min_q = 0.0;
    bool irreducible = false;
    std::vector<ValidationIssue> violations;

    bool ok() const { return violations.empty(); }
    std::string describe() const;
};

// Finite reversible chain: row-stochastic P and its reversible measure Q.
// Instances are immutable after construction; concurrent reads are safe.
struct ChainModel {
    int n = 0;
    std::vector<std::string> labels;  // empty means "use the index as name"
    Eigen::MatrixXd P;
    Eigen::VectorXd Q;

    std::string label(int x) const;
    int index_of_label(const std::string& s) const;  // -1 if not found
};

inline constexpr double kRowSumTol = 1e-12;
inline constexpr double kDetailedBalanceTol = 1e-10;
inline constexpr int kDenseStateLimit = 4096;

ValidationReport validate(const ChainModel& chain);

// Unique stationary vector of an irreducible row-stochastic P, normalized to
// sum 1 (direct null-space solve).
Eigen::VectorXd stationary_measure(const Eigen::MatrixXd& P);

// Builds a validated chain. Q is computed from P when absent. Throws
// InputError when validation reports any violation.
ChainModel make_chain(Eigen::MatrixXd P, std::optional<Eigen::VectorXd> Q = std::nullopt,
                      std::vector<std::string> labels = {});

// Identity-minus-P with rows and columns restricted to the complement of the
// killed set I. The matrix views are materialized dense on demand.
struct DirichletOperator {
    StateSet killed;
    std::vector<int> interior;   // I^c in increasing order
    Eigen::MatrixXd killed_p;    // P restricted to I^c x I^c

    Eigen::MatrixXd one_minus_p() const;
    int dim() const { return static_cast<int>(interior.size()); }
};

DirichletOperator dirichlet(const ChainModel& chain, const StateSet& I);

// {x in I^c : some y in I has P(y,x) > 0}
StateSet boundary(const ChainModel& chain, const StateSet& I);

// Symmetric form of (1-P)^I: entries delta_xy - sqrt(P(x,y) P(y,x)) on I^c.
// Coincides with D^{1/2} (1-P)^I D^{-1/2}, D = diag(Q), under detailed
// balance, and is exactly symmetric in floating point.
Eigen::MatrixXd symmetrized_dirichlet(const ChainModel& chain, const StateSet& I);

}  // namespace metaspec
