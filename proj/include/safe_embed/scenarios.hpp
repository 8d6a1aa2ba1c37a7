#pragma once

// Registry of executable example scenarios. Each scenario has a frozen
// default parameter map, accepts validated overrides, runs its closed-loop
// simulations and returns tracks plus a list of pass/fail assertions.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safe_embed/analysis.hpp"
#include "safe_embed/builtins.hpp"
#include "safe_embed/linearize.hpp"
#include "safe_embed/synthesis.hpp"

namespace safe_embed::scenarios {

enum class Verdict { kPass, kFail, kDegenerate };

std::string to_string(Verdict v);

struct Assertion {
  std::string id;
  std::string expected;
  std::string observed;
  std::string tolerance;
  Verdict verdict = Verdict::kFail;
};

struct NamedTrajectory {
  std::string name;
  Trajectory trajectory;
};

struct ScenarioResult {
  std::string id;
  std::uint64_t seed = 0;
  Json params;  // effective parameters after overrides
  std::vector<NamedTrajectory> tracks;
  std::vector<Assertion> assertions;
  int csv_stride = 1;  // write every k-th grid row

  /// kFail if any assertion failed, else kDegenerate if any was
  /// degenerate, else kPass.
  Verdict verdict() const;
  const Assertion* find(const std::string& id) const;
};

/// Overrides for the time grid, applied on top of the parameter map.
struct RunControls {
  std::optional<double> dt;
  std::optional<double> horizon;
};

/// linear_safe, input_constrained, acc_pidb, acc_is3, robots, case_study.
const std::vector<std::string>& scenario_ids();

/// Throws ConfigError for an unknown id.
Json scenario_defaults(const std::string& id);

/// Runs one scenario. Throws ConfigError on invalid ids or overrides and
/// NumericalError (or subclasses) when a solver fails.
ScenarioResult run_scenario(const std::string& id, const Json& overrides = {},
                            std::uint64_t seed = 0,
                            const RunControls& controls = {});

/// run_scenario with defaults and seed 0.
ScenarioResult check_scenario(const std::string& id);

// ---------------------------------------------------------------------------
// Building blocks shared by the scenarios, the CLI and the tests.

/// Embedded system of the obstacle example from a linear_safe parameter map.
EmbeddedSystem linear_safe_system(const Json& params);

/// Input-embedded obstacle example (x1, x2, u, z_g1, z_g2, z_h).
EmbeddedSystem input_constrained_system(const Json& params);

/// Cruise-control embedded system (v_l, v_f, D, e, a_f, z).
EmbeddedSystem acc_system(const Json& params);

/// Two-robot embedded system (7 states, log barriers).
EmbeddedSystem robots_system(const Json& params);

/// Scalar case study x' = -x + x^2 u with h = limit - x.
EmbeddedSystem case_study_system(const Json& params);

/// Piecewise-constant leader acceleration: sum of the segments [t0, t1, a]
/// that contain t.
class LeaderProfile {
 public:
  struct Segment {
    double t0;
    double t1;
    double accel;
  };
  LeaderProfile(std::string name, std::vector<Segment> segments);
  static LeaderProfile from_json(const Json& j);

  const std::string& name() const { return name_; }
  double acceleration(double t) const;
  /// Leader speed from an initial speed (exact integral of the profile).
  double speed(double v0, double t) const;
  ExogenousSignal signal() const;

 private:
  std::string name_;
  std::vector<Segment> segments_;
};

/// PIDB feedback u = -(kp (v_f - v_d) + ki e + kd a_f + kb z).
LinearFeedback acc_feedback(const EmbeddedSystem& sys, const Vector& gains);

struct HeadwaySearch {
  double best_headway = 0.0;
  double best_distance = 0.0;  // numkit::spectrum_distance to the targets
  Spectrum best_spectrum;
};

/// Scans the cruising headway D over (tau v_d, d_max] (grid, then golden
/// refinement) and returns the point whose controlled-subsystem spectrum
/// (v_f, e, a_f, z block of the closed loop) is closest to `targets`.
HeadwaySearch acc_headway_search(const EmbeddedSystem& sys,
                                 const LinearFeedback& feedback,
                                 const Spectrum& targets, double d_max,
                                 int grid_points);

/// Spectrum of the controlled block of the ACC closed loop linearized at
/// cruising speed with headway `distance` and a consistent barrier state.
Spectrum acc_controlled_spectrum(const EmbeddedSystem& sys,
                                 const LinearFeedback& feedback,
                                 double distance);

/// LQR on the embedded linearization at the current state, re-solved every
/// `period` seconds at grid points: u = -K(t_k) (xbar - xbar_ref).
class ReplannedLqrPolicy final : public FeedbackPolicy {
 public:
  ReplannedLqrPolicy(const EmbeddedSystem& sys, Matrix q, Matrix r,
                     Vector reference, double period);
  void on_grid_point(double t, const Vector& xbar) override;
  Vector operator()(double t, const Vector& xbar) const override;
  int solves() const { return solves_; }

 private:
  const EmbeddedSystem& sys_;
  Matrix q_;
  Matrix r_;
  Vector reference_;
  double period_;
  double next_update_ = 0.0;
  Matrix gain_;
  int solves_ = 0;
};

}  // namespace safe_embed::scenarios
