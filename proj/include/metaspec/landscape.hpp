#pragma once

#include <map>
#include <string>
#include <vector>

#include "metaspec/chain.hpp"

namespace metaspec {

// Random walk in a potential landscape on the lattice {0, 1/N, ..., 1}^d.
// Q(x) is proportional to exp(-beta * F(x)); beta defaults to N.
struct PotentialSpec {
    int d = 1;
    int N = 16;
    std::string preset;                    // empty when an explicit table is given
    std::map<std::string, double> params;  // preset parameters
    std::vector<double> F;                 // explicit table, size (N+1)^d, x fastest
    std::string dynamics = "metropolis";   // or "heat_bath"
    double beta = -1.0;                    // inverse-temperature multiplier; <0 means N
};

// Known presets. In 1D:
//   flat        0
//   single_well scale*(x-1/2)^2
//   double_well barrier*cos^2(2 pi x) + tilt*x   (wells near 1/4 and 3/4)
//   triple_well barrier*cos^2(3 pi x) + tilt*x   (wells near 1/6, 1/2, 5/6)
// In 2D the same names add transverse*(y-1/2)^2 confinement (single_well becomes
// the radial bowl (x-1/2)^2+(y-1/2)^2 scaled).
std::vector<double> potential_table(const PotentialSpec& spec);

int landscape_state_count(const PotentialSpec& spec);

ChainModel build_birth_death(const PotentialSpec& spec);         // d = 1
ChainModel build_lattice_metropolis(const PotentialSpec& spec);  // d = 2
ChainModel build_landscape(const PotentialSpec& spec);           // dispatch on d

// Exact two-point capacity of a nearest-neighbor chain on 0..n-1 as the
// series of inverse conductances between a and b. Independent of the linear
// hitting solver; used to cross-check it.
double birth_death_capacity(const ChainModel& chain, int a, int b);

}  // namespace metaspec
