// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/orchestrator.hpp"

#include <filesystem>
#include <string>

namespace serp {

/// Keys holding wall-clock measurements; everything else is replayable.
inline constexpr const char* kWallClockKey = "wall_clock_seconds";

/// Pretty-printed JSON document with a trailing newline. Without wall-clock
/// fields two runs with the same inputs produce identical bytes.
std::string report_to_json_text(const EpisodeReport& report, bool include_wall_clock = true);
EpisodeReport report_from_json_text(const std::string& text);

void save_report(const EpisodeReport& report, const std::filesystem::path& path);
EpisodeReport load_report(const std::filesystem::path& path);

/// Re-serializes a report document with the wall-clock fields removed.
std::string strip_wall_clock(const std::string& report_text);

} // namespace serp
