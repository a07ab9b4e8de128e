#pragma once

#include <string>

#include "ddpc/bench.hpp"

namespace ddpc {

/// Parse the flat INI-style config document (sections: system, noise,
/// horizons, arx, kernel, mpc, experiment). Unknown sections or keys are
/// errors. Missing keys keep their defaults.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config(const std::string& path);

std::string config_to_string(const ExperimentConfig& cfg);

/// FNV-1a hash of the canonical config serialization.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace ddpc
