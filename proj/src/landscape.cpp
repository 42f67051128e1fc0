#include "metaspec/landscape.hpp"

#include <algorithm>
#include <cmath>

namespace metaspec {

namespace {

constexpr double kPi = 3.14159265358979323846;

double param_or(const PotentialSpec& spec, const std::string& key, double fallback) {
    auto it = spec.params.find(key);
    return it == spec.params.end() ? fallback : it->second;
}

double preset_value(const PotentialSpec& spec, double x, double y) {
    const std::string& p = spec.preset;
    if (p == "flat") return 0.0;
    double transverse = param_or(spec, "transverse", 0.5);
    double confine = spec.d == 2 ? transverse * (y - 0.5) * (y - 0.5) : 0.0;
    if (p == "single_well") {
        double scale = param_or(spec, "scale", 1.0);
        double v = scale * (x - 0.5) * (x - 0.5);
        if (spec.d == 2) v += scale * (y - 0.5) * (y - 0.5);
        return v;
    }
    if (p == "double_well") {
        double b = param_or(spec, "barrier", 0.16);
        double s = param_or(spec, "tilt", 0.1);
        double c = std::cos(2.0 * kPi * x);
        return b * c * c + s * x + confine;
    }
    if (p == "triple_well") {
        double b = param_or(spec, "barrier", 0.25);
        double s = param_or(spec, "tilt", 0.18);
        double c = std::cos(3.0 * kPi * x);
        return b * c * c + s * x + confine;
    }
    throw InputError("unknown potential preset '" + p + "'");
}

std::string coord_label(int i, int N) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", static_cast<double>(i) / N);
    return buf;
}

struct Lattice {
    int d;
    int N;
    int side;  // N + 1
    int n;
    std::vector<double> logq;  // -beta*F, shifted so max is 0
    double beta;
};

Lattice prepare(const PotentialSpec& spec) {
    if (spec.d != 1 && spec.d != 2) throw InputError("dimension must be 1 or 2");
    if (spec.N < 4) throw InputError("grid resolution must be at least 4");
    Lattice lat;
    lat.d = spec.d;
    lat.N = spec.N;
    lat.side = spec.N + 1;
    lat.n = landscape_state_count(spec);
    if (lat.n > kDenseStateLimit)
        throw InputError("lattice has " + std::to_string(lat.n) + " states, above the dense limit");
    lat.beta = spec.beta < 0.0 ? static_cast<double>(spec.N) : spec.beta;

    std::vector<double> F = potential_table(spec);
    lat.logq.resize(F.size());
    for (size_t i = 0; i < F.size(); ++i) lat.logq[i] = -lat.beta * F[i];
    double top = *std::max_element(lat.logq.begin(), lat.logq.end());
    for (double& v : lat.logq) v -= top;
    return lat;
}

// Q from logq by log-sum-exp; the shift in prepare() keeps exp() in range.
Eigen::VectorXd measure_from_logq(const Lattice& lat) {
    Eigen::VectorXd q(lat.n);
    double z = 0.0;
    for (int i = 0; i < lat.n; ++i) {
        q(i) = std::exp(lat.logq[static_cast<size_t>(i)]);
        z += q(i);
    }
    q /= z;
    if (q.minCoeff() <= 0.0)
        throw InputError("potential too steep: Q underflows to zero in double precision");
    return q;
}

double move_rate(const Lattice& lat, const std::string& dynamics, int from, int to,
                 double proposal) {
    double dlog = lat.logq[static_cast<size_t>(to)] - lat.logq[static_cast<size_t>(from)];
    double r;
    if (dynamics == "metropolis") {
        r = proposal * std::exp(std::min(0.0, dlog));
    } else if (dynamics == "heat_bath") {
        r = proposal / (1.0 + std::exp(-dlog));
    } else {
        throw InputError("unknown dynamics '" + dynamics + "'");
    }
    if (r == 0.0)
        throw InputError("potential too steep: a transition rate underflows to zero");
    return r;
}

}  // namespace

int landscape_state_count(const PotentialSpec& spec) {
    int side = spec.N + 1;
    return spec.d == 2 ? side * side : side;
}

std::vector<double> potential_table(const PotentialSpec& spec) {
    const int side = spec.N + 1;
    const int n = landscape_state_count(spec);
    if (!spec.F.empty()) {
        if (static_cast<int>(spec.F.size()) != n)
            throw InputError("potential table has " + std::to_string(spec.F.size()) +
                             " entries, expected " + std::to_string(n));
        for (double v : spec.F)
            if (!std::isfinite(v)) throw InputError("potential table has a non-finite entry");
        return spec.F;
    }
    if (spec.preset.empty()) throw InputError("potential spec needs either a preset or a table");
    std::vector<double> F(static_cast<size_t>(n));
    for (int idx = 0; idx < n; ++idx) {
        int ix = idx % side;
        int iy = spec.d == 2 ? idx / side : 0;
        double x = static_cast<double>(ix) / spec.N;
        double y = static_cast<double>(iy) / spec.N;
        F[static_cast<size_t>(idx)] = preset_value(spec, x, y);
    }
    return F;
}

ChainModel build_birth_death(const PotentialSpec& spec) {
    if (spec.d != 1) throw InputError("build_birth_death needs d = 1");
    Lattice lat = prepare(spec);
    const int n = lat.n;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double out = 0.0;
        for (int dir : {-1, 1}) {
            int j = i + dir;
            if (j < 0 || j >= n) continue;  // reflecting: proposal rejected, mass stays
            double r = move_rate(lat, spec.dynamics, i, j, 0.5);
            P(i, j) = r;
            out += r;
        }
        P(i, i) = std::max(0.0, 1.0 - out);
    }
    std::vector<std::string> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = coord_label(i, lat.N);
    return make_chain(std::move(P), measure_from_logq(lat), std::move(labels));
}

ChainModel build_lattice_metropolis(const PotentialSpec& spec) {
    if (spec.d != 2) throw InputError("build_lattice_metropolis needs d = 2");
    Lattice lat = prepare(spec);
    const int side = lat.side;
    const int n = lat.n;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int idx = 0; idx < n; ++idx) {
        int ix = idx % side;
        int iy = idx / side;
        double out = 0.0;
        for (int k = 0; k < 4; ++k) {
            int jx = ix + dx[k];
            int jy = iy + dy[k];
            if (jx < 0 || jx >= side || jy < 0 || jy >= side) continue;
            int jdx = jy * side + jx;
            double r = move_rate(lat, spec.dynamics, idx, jdx, 0.25);
            P(idx, jdx) = r;
            out += r;
        }
        P(idx, idx) = std::max(0.0, 1.0 - out);
    }
    std::vector<std::string> labels(static_cast<size_t>(n));
    for (int idx = 0; idx < n; ++idx)
        labels[static_cast<size_t>(idx)] =
            coord_label(idx % side, lat.N) + "," + coord_label(idx / side, lat.N);
    return make_chain(std::move(P), measure_from_logq(lat), std::move(labels));
}

ChainModel build_landscape(const PotentialSpec& spec) {
    return spec.d == 2 ? build_lattice_metropolis(spec) : build_birth_death(spec);
}

double birth_death_capacity(const ChainModel& chain, int a, int b) {
    if (a == b) throw InputError("capacity endpoints must differ");
    if (a > b) std::swap(a, b);
    if (a < 0 || b >= chain.n) throw InputError("capacity endpoint out of range");
    for (int i = 0; i < chain.n; ++i)
        for (int j = 0; j < chain.n; ++j)
            if (std::abs(i - j) > 1 && chain.P(i, j) != 0.0)
                throw InputError("chain is not nearest-neighbor; series capacity does not apply");
    // Series law: 1/E = sum over edges (k,k+1) between a and b of 1/c_k with
    // conductance c_k = Q(k) P(k,k+1).
    double inv = 0.0;
    for (int k = a; k < b; ++k) {
        double c = chain.Q(k) * chain.P(k, k + 1);
        if (c <= 0.0) throw InputError("chain is disconnected between the capacity endpoints");
        inv += 1.0 / c;
    }
    return 1.0 / inv;
}

}  // namespace metaspec
