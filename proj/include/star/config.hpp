#pragma once

// Flat "section.key = value" configuration documents. '#' starts a comment;
// blank lines are ignored; every omitted key keeps its default.

#include <string>
#include <vector>

#include "star/star_loop.hpp"

namespace star {

/// Throws ConfigError (with the offending line number) on unknown keys,
/// malformed values, duplicate keys, or violated invariants.
RunConfig parse_config_string(const std::string& text);
RunConfig parse_config(const std::string& path);

/// Every key with its current value, in the documented order. Parsing the
/// result yields an equal configuration.
std::string config_to_string(const RunConfig& cfg);

/// All accepted keys.
std::vector<std::string> config_keys();

}  // namespace star
