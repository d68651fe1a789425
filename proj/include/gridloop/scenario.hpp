#pragma once

#include <string>

#include "gridloop/closed_loop.hpp"

namespace gridloop {

inline constexpr const char* kSchemaVersion = "1.0";

/// Parse, schema-validate and fully build a scenario from a JSON file.
/// Unknown keys are rejected; physical defects (singular Y11, rank-deficient
/// H, inverted limits) are reported with diagnostics.
Scenario load_scenario(const std::string& path);

/// Parse from an in-memory JSON document (used by tests and round-trips).
Scenario parse_scenario(const std::string& text, const std::string& origin = "<memory>");

/// Serialize back to the file schema. load(serialize(s)) reproduces s.
std::string scenario_to_json(const Scenario& scenario);

}  // namespace gridloop
