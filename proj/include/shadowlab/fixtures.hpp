#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "shadowlab/glued_system.hpp"

namespace shadowlab {

// On-disk model descriptions shared by the files under fixtures/ and the CLI.
//
// Glued heteroclinic systems:
//   {"n": 3,
//    "q": {"unstable": [block, ...], "stable": [block, ...]},
//    "p": {"stable": [block, ...], "unstable": [block, ...]},
//    "a_q": [0.5, 0, 0], "tau": 1.0, "K": [[...], ...], "chart_radius": 2.0}
// with an optional "c1" entry holding the measured defect constant of the
// glued two-jump construction on that system.
//
// Plain linear fields: {"n": 3, "field": [block, ...]}.
//
// Blocks: {"type": "real", "rate": r} or {"type": "spiral", "a": ar, "b": br}.

Block block_from_json(const nlohmann::json& j);
nlohmann::json block_to_json(const Block& b);

BlockLinearField field_from_json(const nlohmann::json& j);
nlohmann::json field_to_json(const BlockLinearField& field);

GluedSystemPtr glued_from_json(const nlohmann::json& j);
nlohmann::json glued_to_json(const GluedHeteroclinicSystem& sys);

// Reads and parses a fixture file. Throws ModelError on a missing file,
// malformed JSON, or a schema mismatch; build errors of the described
// system propagate unchanged.
nlohmann::json load_fixture_json(const std::string& path);
GluedSystemPtr load_glued_system(const std::string& path);
BlockLinearField load_field(const std::string& path);

// The frozen defect constant of a glued fixture, when the file carries one.
std::optional<double> fixture_c1(const nlohmann::json& j);

}  // namespace shadowlab
