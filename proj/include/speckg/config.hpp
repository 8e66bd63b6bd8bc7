#pragma once

#include <string>
#include <utility>
#include <vector>

#include "speckg/trainer.hpp"

namespace speckg {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat "key = value" text, UTF-8, '#' comments. Order preserved.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

ConfigEntries parse_config_text(const std::string& text);
ConfigEntries parse_config_file(const std::string& path);

// Builds a TrainConfig; unknown keys are rejected, and `alpha` and `beta`
// must be present.
TrainConfig train_config_from_entries(const ConfigEntries& entries);

// FNV-1a of the sorted canonical "key=value" lines, as 16 hex digits.
std::string config_hash(const ConfigEntries& entries);

std::string format_double(double v); // round-trip precision, deterministic

} // namespace speckg
