#pragma once

// Closed-loop simulation of embedded systems, safety audits, barrier-state
// consistency checks and empirical input-to-state-safety testing.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "safe_embed/embedding.hpp"

namespace safe_embed {

/// State feedback evaluated at every RK4 stage. `on_grid_point` runs once
/// per step, before the step, with the grid state; stateful policies (gain
/// schedules) update there so stage evaluations stay pure.
class FeedbackPolicy {
 public:
  virtual ~FeedbackPolicy() = default;
  virtual void on_grid_point(double /*t*/, const Vector& /*xbar*/) {}
  virtual Vector operator()(double t, const Vector& xbar) const = 0;
};

class LinearPolicy final : public FeedbackPolicy {
 public:
  explicit LinearPolicy(LinearFeedback feedback)
      : feedback_(std::move(feedback)) {}
  Vector operator()(double, const Vector& xbar) const override {
    return feedback_(xbar);
  }

 private:
  LinearFeedback feedback_;
};

/// Exogenous signal w(t) fed to the plant (e.g. leader acceleration).
using ExogenousSignal = std::function<Vector(double t)>;

enum class TrajectoryStatus { kCompleted, kDiverged, kSafetyBreach };

std::string to_string(TrajectoryStatus status);

/// Uniform-grid record of a closed-loop run. Every track has one entry per
/// grid time; `margins` are computed from the plant state, never from z.
struct Trajectory {
  int n = 0;   // plant states
  int nz = 0;  // barrier states
  int m = 0;   // inputs
  double dt = 0.0;
  std::vector<double> t;
  std::vector<Vector> xbar;
  std::vector<Vector> u;  // applied input: feedback + disturbance
  std::vector<Vector> d;  // disturbance sample held over the step
  std::vector<Vector> margins;
  TrajectoryStatus status = TrajectoryStatus::kCompleted;
  double breach_time = 0.0;
  int breach_constraint = -1;
  double d_sup = 0.0;  // sup-norm of the disturbance samples applied

  std::size_t size() const { return t.size(); }
  Vector x(std::size_t k) const { return xbar[k].head(n); }
  Vector z(std::size_t k) const { return xbar[k].tail(nz); }
  const Vector& final_state() const { return xbar.back(); }
};

struct SimulationOptions {
  double horizon = 10.0;
  double dt = 1e-3;
  int substeps = 1;  // RK4 steps per grid interval
  /// When positive, each grid interval is integrated by step-doubling RK4
  /// with this local error tolerance (relative to 1 + |xbar|), starting
  /// from dt / substeps.
  double local_tol = 0.0;
  ExogenousSignal exogenous;  // empty = zero
};

/// RK4 closed loop with the disturbance sampled per grid step and held over
/// it. Each grid interval is integrated with `substeps` equal RK4 steps, or
/// adaptively when `local_tol` is set.
/// Ends early with kSafetyBreach when any h_i(x) <= 0 (at a grid point or
/// inside a stage) and with kDiverged on non-finite state. Deterministic
/// given the disturbance seed.
Trajectory simulate_closed_loop(const EmbeddedSystem& sys,
                                FeedbackPolicy& policy,
                                const DisturbanceSignal& disturbance,
                                const Vector& xbar0,
                                const SimulationOptions& options);

Trajectory simulate_closed_loop(const EmbeddedSystem& sys,
                                const LinearFeedback& feedback,
                                const DisturbanceSignal& disturbance,
                                const Vector& xbar0,
                                const SimulationOptions& options);

struct ConstraintAudit {
  std::string label;
  double min_margin = 0.0;
  double argmin_time = 0.0;
};

struct SafetyAudit {
  std::vector<ConstraintAudit> constraints;
  bool violated = false;
  std::optional<double> breach_time;
};

/// Grid minimum of each h_i over the plant-state track. A run that was
/// terminated by a breach is always reported as violated.
SafetyAudit safety_audit(const Trajectory& traj,
                         const std::vector<SafetyConstraint>& constraints);

/// |z_i(t) - (B(h_i(x(t))) - beta0_i)| along the track.
std::vector<double> bas_mismatch_profile(const Trajectory& traj,
                                         const EmbeddedSystem& sys, int index);

/// Sup-norm of bas_mismatch_profile.
double bas_consistency(const Trajectory& traj, const EmbeddedSystem& sys,
                       int index);

/// Class-K bound on the barrier state for the scalar case study
/// x' = -x + x^2 u with u = -K_z z + d:
///   2|d|/K_z for |d| < 0.5, (|d| + 0.5)/K_z otherwise.
/// Throws ModelError for K_z <= 1 or d_abs < 0.
double issf_case_bound(double d_abs, double k_z);

using ClassKFunction = std::function<double(double)>;

struct IssfTrial {
  std::uint64_t seed = 0;
  double z0_norm = 0.0;
  double z_sup = 0.0;
  double d_sup = 0.0;
  double bound = 0.0;  // alpha_z(|z0|) + alpha_u(|d|_inf)
  bool bound_holds = false;
  bool safe = false;
  TrajectoryStatus status = TrajectoryStatus::kCompleted;
};

struct IssfReport {
  std::vector<IssfTrial> trials;
  std::vector<Trajectory> trajectories;  // filled when requested
  double pass_fraction = 0.0;
  int breaches = 0;
};

struct IssfOptions {
  int trials = 1;
  std::uint64_t base_seed = 0;  // trial k uses base_seed + k
  SimulationOptions simulation;
  bool keep_trajectories = false;
  int threads = 0;  // 0 = hardware concurrency
  /// Called from the worker thread with each finished trajectory (trial
  /// index, trajectory). Must only touch per-trial state.
  std::function<void(int, const Trajectory&)> inspect;
};

/// Runs `trials` seeded closed-loop simulations (independent, possibly in
/// parallel; merged by trial index) and checks
///   sup_t |z(t)| <= alpha_z(|z0|) + alpha_u(|d|_inf)
/// on the grid. Violations are data, not errors.
IssfReport issf_empirical(const EmbeddedSystem& sys,
                          const LinearFeedback& feedback,
                          const DisturbanceSignal& disturbance_family,
                          const ClassKFunction& alpha_z,
                          const ClassKFunction& alpha_u, const Vector& xbar0,
                          const IssfOptions& options);

struct RateCheck {
  long checked_points = 0;
  long violations = 0;
  double worst_rate = -1e300;  // max d(z^2)/dt over checked points
};

/// At every grid point where |z_i| >= alpha_u(|d|), the rate
/// d(z_i^2)/dt = 2 z_i z_i' (z_i' from the embedded field at the recorded
/// state and applied input) must not exceed `tolerance`.
RateCheck lyapunov_rate_check(const Trajectory& traj, const EmbeddedSystem& sys,
                              int index, const ClassKFunction& alpha_u,
                              double tolerance,
                              const ExogenousSignal& exogenous = {});

}  // namespace safe_embed
