#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dsp/scenario.hpp"

namespace dsp {

inline constexpr int kScenarioSchemaVersion = 1;

std::string scenario_to_string(const Scenario& s);

/// Parses and re-validates. Syntax errors report the line; structural errors
/// report the field path (e.g. `tracks[2].states`). Unknown keys are ignored.
Scenario scenario_from_string(const std::string& text);

void write_scenario(const Scenario& s, const std::filesystem::path& path);
Scenario read_scenario(const std::filesystem::path& path);

/// JSON pretty-printer that keeps arrays of scalars on a single line.
std::string compact_dump(const nlohmann::ordered_json& j, int indent = 2);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dsp
