#pragma once

#include "colf/env/transport_env.hpp"

#include <toml.hpp>

#include <string>

namespace colf::env {

// Named presets: "one_goal", "two_goal", "one_goal_shrunk", "two_goal_shrunk".
ScenarioConfig scenario_preset(const std::string& name);
bool is_scenario_preset(const std::string& name);

// Reads a [scenario] table. `preset` (optional) selects the base, `shrink`
// scales the spawn boxes; every other key overrides one ScenarioConfig field.
ScenarioConfig scenario_from_toml(const toml::table& scenario);
std::string scenario_to_toml(const ScenarioConfig& c);

// Accepts a preset name or a path to a TOML file with a [scenario] table.
ScenarioConfig load_scenario(const std::string& name_or_path);

}  // namespace colf::env
