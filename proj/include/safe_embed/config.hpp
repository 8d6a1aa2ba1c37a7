#pragma once

// JSON run configurations for the command-line front end.
//
// A configuration either names a registered scenario
//
//   {"schema_version": 1, "scenario": "acc_is3", "overrides": {...},
//    "seed": 7, "dt": 0.001, "horizon": 100, "out": "results"}
//
// or describes a system inline from a named builtin:
//
//   {"schema_version": 1,
//    "system": {"builtin": "linear2d", "params": {...}},
//    "barrier": "inverse", "gammas": [1.0], "input_constraints": false,
//    "controller": {"type": "ackermann", "poles": [-2, -3, -1]},
//    "disturbance": {"kind": "uniform_bounded", "bound": 0.05},
//    "initial_state": [4, 4], "horizon": 20, "dt": 0.001,
//    "assertions": {"safe": true, "final_error_below": 0.01}}
//
// Controller types: "gain" (matrix + "sign"), "ackermann" ("poles"),
// "lqr" ("q", "r" as matrices or diagonals), "pidb" ("gains", acc only).
// Unknown keys anywhere are rejected with ConfigError.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "safe_embed/scenarios.hpp"

namespace safe_embed::config {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  std::optional<std::string> scenario;
  Json overrides = Json::object();
  Json inline_spec;  // null unless the config describes a system inline
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> horizon;
  std::optional<std::string> out;
};

/// Reads and parses a JSON file; read or syntax errors become ConfigError.
Json load_json_file(const std::filesystem::path& path);

/// Validates the top-level layout (including the inline system block).
RunConfig parse_run_config(const Json& j);

/// Embedded system described by an inline spec.
EmbeddedSystem build_inline_system(const Json& spec);

/// Embedded system for a config: inline, or the named scenario's system
/// with its overrides applied.
EmbeddedSystem system_for(const RunConfig& cfg);

/// Feedback law for an inline controller block over `sys`. Ackermann and
/// LQR gains are computed at the embedded equilibrium.
LinearFeedback controller_for(const EmbeddedSystem& sys, const Json& controller);

/// Simulates an inline spec and evaluates its optional assertions.
scenarios::ScenarioResult run_inline(const RunConfig& cfg);

struct SynthesisReport {
  LinearizedSystem linearization;
  LinearFeedback feedback;
  Spectrum closed_loop;
  bool hurwitz = false;
  std::string method;
};

/// Gain synthesis at the embedded equilibrium for the config's controller
/// block ("ackermann" or "lqr").
SynthesisReport synthesize(const RunConfig& cfg, const Json& controller);

}  // namespace safe_embed::config
