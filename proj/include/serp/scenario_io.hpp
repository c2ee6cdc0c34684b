// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/ase_engine.hpp"
#include "serp/sim_world.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace serp {

enum class EvolutionMode { ilad, ad_only, il_only };
std::string to_string(EvolutionMode mode);
EvolutionMode parse_mode(const std::string& text);

struct EvolutionConfig {
    EvolutionOptions options;
    LossWeights weights;
    int steps = 200;   // rollout length of one evaluation episode
    EvolutionMode mode = EvolutionMode::ilad;
};

struct DetectionConfig {
    double stall_distance = 0.05;   // m
    int stall_window = 30;          // steps
    double detection_radius = 1.0;  // m
};

/// Everything a run needs beyond the bare Scenario: controller and evolution
/// settings, failure thresholds and where relative paths resolve.
struct ScenarioSpec {
    Scenario scenario;
    std::filesystem::path base_dir;
    ControllerConfig controller;
    EvolutionConfig evolution;
    DetectionConfig detection;
    PlannerParams default_params{1.0, 1.0, 10.0};
    int retrieval_k = 3;
    int gcot_k = 3;
    double shortcut_clearance = 0.6;   // global path shortcutting, 0 disables

    std::filesystem::path resolve(const std::string& relative) const;
};

/// Run-length encoded grid row: space separated "<count>x<value>" runs,
/// e.g. "2x1 76x0 2x1". Row 0 is the lowest y.
std::vector<std::uint8_t> decode_rle_row(const std::string& text);
std::string encode_rle_row(const std::vector<std::uint8_t>& cells);

ScenarioSpec scenario_from_json_text(const std::string& text, const std::filesystem::path& base_dir);
ScenarioSpec load_scenario(const std::filesystem::path& path);

/// Lint: referenced files exist and parse, the graph validates, injections
/// fit the grid, the start is free. Empty result means the scenario is usable.
std::vector<std::string> lint_scenario(const ScenarioSpec& spec);

} // namespace serp
