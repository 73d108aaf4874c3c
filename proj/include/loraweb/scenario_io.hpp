#pragma once

#include <string>

#include "loraweb/simulator.hpp"
#include "loraweb/sweep.hpp"

namespace loraweb::sim {

// YAML scenario and sweep files. Unknown keys are rejected with a ConfigError
// that lists every one of them; missing or unreadable files raise ConfigError.
ScenarioSpec parse_scenario(const std::string& text);
ScenarioSpec load_scenario(const std::string& path);

// `base_file` inside a sweep file is resolved relative to the sweep file.
SweepSpec parse_sweep(const std::string& text, const std::string& base_dir = ".");
SweepSpec load_sweep(const std::string& path);

}  // namespace loraweb::sim
