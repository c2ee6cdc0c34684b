// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/orchestrator.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace serp {

/// Final occupancy grid with the executed trajectory, start and goal.
std::string trajectory_svg(const EpisodeReport& report);
/// Evolution loss per epoch, one polyline per local phase.
std::string loss_svg(const EpisodeReport& report);
/// Parameters per epoch as a heatmap, each row scaled to its own range.
std::string params_svg(const EpisodeReport& report);

/// Writes trajectory.svg, loss.svg and params.svg; returns the paths.
std::vector<std::filesystem::path> write_plots(const EpisodeReport& report, const std::filesystem::path& dir);

} // namespace serp
