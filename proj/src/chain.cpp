#include "metaspec/chain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace metaspec {

StateSet::StateSet(std::vector<int> members, int universe) : n_(universe) {
    if (universe < 0) throw InputError("state set universe must be nonnegative");
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    for (int x : members) {
        if (x < 0 || x >= universe) {
            throw InputError("state index " + std::to_string(x) + " outside 0.." +
                             std::to_string(universe - 1));
        }
    }
    members_ = std::move(members);
    mask_.assign(static_cast<size_t>(n_), 0);
    for (int x : members_) mask_[static_cast<size_t>(x)] = 1;
}

StateSet StateSet::full(int universe) {
    std::vector<int> all(static_cast<size_t>(universe));
    for (int i = 0; i < universe; ++i) all[static_cast<size_t>(i)] = i;
    return StateSet(std::move(all), universe);
}

StateSet StateSet::complement() const {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n_ - size()));
    for (int i = 0; i < n_; ++i)
        if (!mask_[static_cast<size_t>(i)]) out.push_back(i);
    return StateSet(std::move(out), n_);
}

StateSet StateSet::unite(const StateSet& other) const {
    if (other.n_ != n_) throw InputError("state set universe mismatch");
    std::vector<int> out = members_;
    out.insert(out.end(), other.members_.begin(), other.members_.end());
    return StateSet(std::move(out), n_);
}

StateSet StateSet::minus(const StateSet& other) const {
    if (other.n_ != n_) throw InputError("state set universe mismatch");
    std::vector<int> out;
    for (int x : members_)
        if (!other.contains(x)) out.push_back(x);
    return StateSet(std::move(out), n_);
}

std::string ValidationReport::describe() const {
    std::ostringstream os;
    if (violations.empty()) {
        os << "valid";
    } else {
        os << violations.size() << " violation(s):";
        for (const auto& v : violations) os << " [" << v.what << " residual=" << v.residual << "]";
    }
    return os.str();
}

std::string ChainModel::label(int x) const {
    if (x >= 0 && x < static_cast<int>(labels.size()) && !labels[static_cast<size_t>(x)].empty())
        return labels[static_cast<size_t>(x)];
    return std::to_string(x);
}

int ChainModel::index_of_label(const std::string& s) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == s) return static_cast<int>(i);
    return -1;
}

namespace {

// Strong connectivity of the positive-entry digraph: forward and backward
// reachability from state 0 must both cover everything.
bool strongly_connected(const Eigen::MatrixXd& P) {
    const int n = static_cast<int>(P.rows());
    if (n == 0) return false;
    auto sweep = [&](bool forward) {
        std::vector<char> seen(static_cast<size_t>(n), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            int x = stack.back();
            stack.pop_back();
            for (int y = 0; y < n; ++y) {
                double w = forward ? P(x, y) : P(y, x);
                if (w > 0.0 && !seen[static_cast<size_t>(y)]) {
                    seen[static_cast<size_t>(y)] = 1;
                    ++count;
                    stack.push_back(y);
                }
            }
        }
        return count == n;
    };
    return sweep(true) && sweep(false);
}

}  // namespace

ValidationReport validate(const ChainModel& chain) {
    ValidationReport rep;
    const int n = chain.n;
    if (n < 2) {
        rep.violations.push_back({"state count must be at least 2", static_cast<double>(n)});
        return rep;
    }
    if (chain.P.rows() != n || chain.P.cols() != n || chain.Q.size() != n) {
        rep.violations.push_back({"dimension mismatch between P, Q and n", 0.0});
        return rep;
    }
    if (!chain.labels.empty() && static_cast<int>(chain.labels.size()) != n) {
        rep.violations.push_back({"label count differs from state count", 0.0});
        return rep;
    }

    bool bad_data = false;
    for (int i = 0; i < n && !bad_data; ++i)
        for (int j = 0; j < n; ++j)
            if (!std::isfinite(chain.P(i, j)) || chain.P(i, j) < 0.0) {
                rep.violations.push_back({"P has a negative or non-finite entry at (" +
                                              std::to_string(i) + "," + std::to_string(j) + ")",
                                          chain.P(i, j)});
                bad_data = true;
                break;
            }
    for (int i = 0; i < n; ++i)
        if (!std::isfinite(chain.Q(i))) {
            rep.violations.push_back({"Q has a non-finite entry", chain.Q(i)});
            bad_data = true;
            break;
        }
    if (bad_data) return rep;

    for (int i = 0; i < n; ++i) {
        double err = std::abs(chain.P.row(i).sum() - 1.0);
        rep.max_row_sum_error = std::max(rep.max_row_sum_error, err);
    }
    if (rep.max_row_sum_error > kRowSumTol)
        rep.violations.push_back({"row sums deviate from 1", rep.max_row_sum_error});

    rep.min_q = chain.Q.minCoeff();
    if (rep.min_q <= 0.0) rep.violations.push_back({"Q has a nonpositive entry", rep.min_q});
    rep.q_sum_error = std::abs(chain.Q.sum() - 1.0);
    if (rep.q_sum_error > kRowSumTol)
        rep.violations.push_back({"Q does not sum to 1", rep.q_sum_error});

    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double a = chain.Q(i) * chain.P(i, j);
            double b = chain.Q(j) * chain.P(j, i);
            if (a == 0.0 && b == 0.0) continue;
            double rel = std::abs(a - b) / std::max(std::abs(a), std::abs(b));
            rep.max_detailed_balance_rel_error = std::max(rep.max_detailed_balance_rel_error, rel);
        }
    }
    if (rep.max_detailed_balance_rel_error > kDetailedBalanceTol)
        rep.violations.push_back({"detailed balance fails", rep.max_detailed_balance_rel_error});

    rep.irreducible = strongly_connected(chain.P);
    if (!rep.irreducible)
        rep.violations.push_back({"transition graph is not strongly connected", 0.0});

    return rep;
}

Eigen::VectorXd stationary_measure(const Eigen::MatrixXd& P) {
    const int n = static_cast<int>(P.rows());
    if (n < 1 || P.cols() != n) throw InputError("stationary_measure needs a square matrix");
    // (P^T - I) q = 0 with the last equation replaced by sum(q) = 1.
    Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    Eigen::VectorXd q = lu.solve(b);
    double resid = (A * q - b).cwiseAbs().maxCoeff();
    if (!q.allFinite() || resid > 1e-8)
        throw NumericalError("stationary measure solve did not converge (residual " +
                             std::to_string(resid) + ")");
    // One refinement pass; the replaced row makes A mildly non-normal.
    q -= lu.solve(A * q - b);
    if (q.minCoeff() <= 0.0)
        throw NumericalError("stationary measure has a nonpositive entry; chain may be reducible");
    q /= q.sum();
    return q;
}

ChainModel make_chain(Eigen::MatrixXd P, std::optional<Eigen::VectorXd> Q,
                      std::vector<std::string> labels) {
    ChainModel chain;
    chain.n = static_cast<int>(P.rows());
    if (chain.n > kDenseStateLimit)
        throw InputError("state count " + std::to_string(chain.n) + " exceeds dense limit " +
                         std::to_string(kDenseStateLimit));
    chain.P = std::move(P);
    chain.labels = std::move(labels);
    if (Q.has_value()) {
        chain.Q = std::move(*Q);
    } else {
        if (chain.P.rows() != chain.P.cols()) throw InputError("P must be square");
        // Catch malformed or reducible matrices before the measure solve; it
        // would only report them as convergence trouble.
        if (!chain.P.allFinite() || chain.P.minCoeff() < 0.0)
            throw InputError("P has a negative or non-finite entry");
        for (int a = 0; a < chain.n; ++a)
            if (std::abs(chain.P.row(a).sum() - 1.0) > kRowSumTol)
                throw InputError("row " + std::to_string(a) + " of P does not sum to 1");
        if (!strongly_connected(chain.P))
            throw InputError("transition graph is not strongly connected");
        chain.Q = stationary_measure(chain.P);
    }
    ValidationReport rep = validate(chain);
    if (!rep.ok()) throw InputError("invalid chain: " + rep.describe());
    return chain;
}

DirichletOperator dirichlet(const ChainModel& chain, const StateSet& I) {
    if (I.universe() != chain.n) throw InputError("killed set universe mismatch");
    if (I.size() == chain.n) throw InputError("killed set covers every state; operator is empty");
    DirichletOperator op;
    op.killed = I;
    op.interior = I.complement().members();
    const int m = static_cast<int>(op.interior.size());
    op.killed_p.resize(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) op.killed_p(a, b) = chain.P(op.interior[static_cast<size_t>(a)],
                                                               op.interior[static_cast<size_t>(b)]);
    return op;
}

Eigen::MatrixXd DirichletOperator::one_minus_p() const {
    return Eigen::MatrixXd::Identity(dim(), dim()) - killed_p;
}

StateSet boundary(const ChainModel& chain, const StateSet& I) {
    if (I.universe() != chain.n) throw InputError("set universe mismatch");
    std::vector<int> out;
    for (int x = 0; x < chain.n; ++x) {
        if (I.contains(x)) continue;
        for (int y : I.members()) {
            if (chain.P(y, x) > 0.0) {
                out.push_back(x);
                break;
            }
        }
    }
    return StateSet(std::move(out), chain.n);
}

Eigen::MatrixXd symmetrized_dirichlet(const ChainModel& chain, const StateSet& I) {
    DirichletOperator op = dirichlet(chain, I);
    const int m = op.dim();
    Eigen::MatrixXd S(m, m);
    for (int a = 0; a < m; ++a) {
        for (int b = a; b < m; ++b) {
            int x = op.interior[static_cast<size_t>(a)];
            int y = op.interior[static_cast<size_t>(b)];
            double off = std::sqrt(chain.P(x, y) * chain.P(y, x));
            double v = (a == b ? 1.0 - chain.P(x, x) : -off);
            S(a, b) = v;
            S(b, a) = v;
        }
    }
    return S;
}

}  // namespace metaspec
