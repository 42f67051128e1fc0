#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "metaspec/chain.hpp"
#include "metaspec/exit_law.hpp"
#include "metaspec/landscape.hpp"
#include "metaspec/metastable.hpp"
#include "metaspec/solver.hpp"
#include "metaspec/spectral.hpp"

namespace metaspec::io {

using json = nlohmann::json;

inline constexpr const char* kToolName = "metaspec";
inline constexpr const char* kToolVersion = "0.1.0";

// Doubles with infinities flattened to strings so reports stay valid JSON.
json num(double v);
double num_from(const json& j);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

// FNV-1a over the raw bytes, as a fixed-width hex string.
std::string digest_hex(const std::string& bytes);
json file_stamp(const std::string& path);

// Sorted keys, shortest round-trip floats, trailing newline.
std::string canonical_dump(const json& j);

json chain_to_json(const ChainModel& chain);
ChainModel chain_from_json(const json& j);
// JSON chain file, or a CSV edge list (from,to,prob per line) when the path
// ends in .csv; `q_csv` optionally supplies the measure for the CSV form.
ChainModel load_chain(const std::string& path, const std::string& q_csv = "");
void save_chain(const ChainModel& chain, const std::string& path);

PotentialSpec potential_from_json(const json& j);
PotentialSpec load_potential(const std::string& path);

json describe(const ValidationReport& rep);
json describe(const HittingSolution& sol, const ChainModel& chain);
json describe(const MetastableSpec& spec, const ChainModel& chain);
json describe(const ValleyDecomposition& dec, const ChainModel& chain);
json describe(const CapacityTable& tab, const ChainModel& chain);
json describe(const GenericityReport& rep);
json describe(const Hierarchy& h, const ChainModel& chain);
Hierarchy hierarchy_from_json(const json& j, const ChainModel& chain);
json describe(const MeanExitReport& rep);
json describe(const IdentityReport& rep);
json describe(const SpectralReport& rep);
json describe(const std::vector<DetRoot>& roots);
json describe(const DvReport& rep);
json describe(const DualityReport& rep);
json describe(const SurvivalSeries& s, std::size_t max_points = 10000);
json describe(const LaplaceSurvival& l);
json describe(const ResidueExpansion& r);
json describe(const ExpLawReport& r);
json describe(const MCSample& mc);

}  // namespace metaspec::io
