#pragma once

// Output writers: per-trajectory CSV tracks and the plain-text assertion
// report. All files are written to a temporary name and renamed into place.

#include <filesystem>
#include <string>
#include <vector>

#include "safe_embed/scenarios.hpp"

namespace safe_embed {

inline constexpr int kOutputSchemaVersion = 1;

/// Header `t,x1..xN,z1..zK,u1..uM,d1..dM,h1..hQ,status`.
std::string csv_header(const Trajectory& traj);

/// CSV text of a trajectory, keeping every `stride`-th row plus the final
/// one. The status column reads "ok" except on the last row, which carries
/// the trajectory status.
std::string trajectory_csv(const Trajectory& traj, int stride = 1);

/// Writes `content` to `path` via a sibling temp file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Tab-separated report: a header block (schema version, scenario, seed,
/// verdict, parameters) followed by one row per assertion.
std::string assertion_report(const scenarios::ScenarioResult& result);

/// Writes `<root>/<scenario>/seed<seed>/{<track>.csv, report.txt}` and
/// returns the files written.
std::vector<std::filesystem::path> write_scenario_outputs(
    const std::filesystem::path& root, const scenarios::ScenarioResult& result);

}  // namespace safe_embed
