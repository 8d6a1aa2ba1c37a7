#include "safe_embed/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <thread>

namespace safe_embed {

std::string to_string(TrajectoryStatus status) {
  switch (status) {
    case TrajectoryStatus::kCompleted:
      return "completed";
    case TrajectoryStatus::kDiverged:
      return "diverged";
    case TrajectoryStatus::kSafetyBreach:
      return "safety_breach";
  }
  return "unknown";
}

namespace {

Vector padded_disturbance(const Vector& d, int m) {
  if (d.size() == m) return d;
  if (d.size() > m) return d.head(m);
  Vector out = Vector::Zero(m);
  out.head(d.size()) = d;
  return out;
}

int first_unsafe(const Vector& margins) {
  for (int i = 0; i < margins.size(); ++i) {
    if (!(margins(i) > 0.0)) return i;
  }
  return -1;
}

// Step-doubling RK4 across [t, t + span]. `h` carries the step size between
// calls. Trial steps that leave the safe set or produce non-finite values
// are rejected; a breach is reported once the step has collapsed.
Vector adaptive_interval(const numkit::TimeField& field, double t, const Vector& x0,
                         double span, double tol, double& h) {
  const double t_end = t + span;
  const double h_min = span * 1e-7;
  Vector x = x0;
  while (t < t_end - 1e-15 * std::max(1.0, std::abs(t_end))) {
    const double step = std::min(h, t_end - t);
    const bool floor = step <= h_min;
    double ratio = 0.0;
    bool accepted = false;
    Vector next;
    try {
      const Vector full = numkit::rk4_step(field, t, x, step);
      const Vector mid = numkit::rk4_step(field, t, x, 0.5 * step);
      next = numkit::rk4_step(field, t + 0.5 * step, mid, 0.5 * step);
      if (next.allFinite() && full.allFinite()) {
        const double err = (next - full).cwiseAbs().maxCoeff() / 15.0;
        ratio = err / (tol * (1.0 + x.cwiseAbs().maxCoeff()));
        accepted = ratio <= 1.0 || floor;
      } else if (floor) {
        return next;
      }
    } catch (const SafetyBreach&) {
      if (floor) throw;
    }
    if (accepted) {
      x = next;
      t += step;
      const double grow = ratio > 0.0 ? 0.9 * std::pow(ratio, -0.2) : 4.0;
      h = std::min(span, step * std::min(4.0, grow));
    } else {
      const double shrink = ratio > 0.0 ? 0.9 * std::pow(ratio, -0.2) : 0.25;
      h = std::max(h_min, step * std::clamp(shrink, 0.1, 0.5));
    }
  }
  return x;
}

}  // namespace

Trajectory simulate_closed_loop(const EmbeddedSystem& sys,
                                FeedbackPolicy& policy,
                                const DisturbanceSignal& disturbance,
                                const Vector& xbar0,
                                const SimulationOptions& options) {
  if (xbar0.size() != sys.dim()) {
    throw DimensionError("simulate_closed_loop: initial state has size " +
                         std::to_string(xbar0.size()) + ", expected " +
                         std::to_string(sys.dim()));
  }
  if (!(options.dt > 0.0) || !(options.horizon > 0.0)) {
    throw ModelError("simulate_closed_loop: dt and horizon must be positive");
  }
  if (options.substeps < 1) {
    throw ModelError("simulate_closed_loop: substeps must be >= 1");
  }
  const int m = sys.m();
  const int nw = sys.base().exogenous_dim();
  const double dt = options.dt;
  double adaptive_h = dt / options.substeps;
  const long steps = static_cast<long>(std::ceil(options.horizon / dt - 1e-9));

  Trajectory traj;
  traj.n = sys.n();
  traj.nz = sys.barrier_count();
  traj.m = m;
  traj.dt = dt;
  traj.t.reserve(steps + 1);
  traj.xbar.reserve(steps + 1);
  traj.u.reserve(steps + 1);
  traj.d.reserve(steps + 1);
  traj.margins.reserve(steps + 1);

  DisturbanceGenerator gen(disturbance, dt);
  auto exo = [&](double t) -> Vector {
    if (nw == 0) return Vector::Zero(0);
    if (!options.exogenous) return Vector::Zero(nw);
    Vector w = options.exogenous(t);
    if (w.size() != nw) {
      throw DimensionError("simulate_closed_loop: exogenous signal size");
    }
    return w;
  };

  Vector xbar = xbar0;
  for (long k = 0;; ++k) {
    const double t = k * dt;
    const Vector margins = sys.margins(xbar);
    policy.on_grid_point(t, xbar);
    // The sample at the final grid point is recorded but never applied, so
    // it stays out of the running sup-norm.
    const Vector d = padded_disturbance(
        k < steps ? gen.sample(k) : disturbance_sample(disturbance, k, dt), m);
    traj.t.push_back(t);
    traj.xbar.push_back(xbar);
    traj.d.push_back(d);
    traj.margins.push_back(margins);
    if (!xbar.allFinite()) {
      traj.u.push_back(Vector::Constant(m, std::nan("")));
      traj.status = TrajectoryStatus::kDiverged;
      break;
    }
    traj.u.push_back(policy(t, xbar) + d);
    if (const int bad = first_unsafe(margins); bad >= 0) {
      traj.status = TrajectoryStatus::kSafetyBreach;
      traj.breach_time = t;
      traj.breach_constraint = bad;
      break;
    }
    if (k == steps) break;

    const numkit::TimeField field = [&](double s, const Vector& y) {
      return sys(y, policy(s, y) + d, exo(s));
    };
    const double step = std::min(dt, options.horizon - t);
    const double sub = step / options.substeps;
    try {
      if (options.local_tol > 0.0) {
        xbar = adaptive_interval(field, t, xbar, step, options.local_tol, adaptive_h);
      } else {
        for (int j = 0; j < options.substeps; ++j) {
          xbar = numkit::rk4_step(field, t + j * sub, xbar, sub);
        }
      }
    } catch (const SafetyBreach& e) {
      traj.status = TrajectoryStatus::kSafetyBreach;
      traj.breach_time = t + step;
      traj.breach_constraint = e.constraint();
      break;
    }
  }
  traj.d_sup = gen.sup_norm();
  return traj;
}

Trajectory simulate_closed_loop(const EmbeddedSystem& sys,
                                const LinearFeedback& feedback,
                                const DisturbanceSignal& disturbance,
                                const Vector& xbar0,
                                const SimulationOptions& options) {
  if (feedback.inputs() != sys.m() || feedback.states() != sys.dim()) {
    throw DimensionError("simulate_closed_loop: feedback gain is " +
                         std::to_string(feedback.inputs()) + "x" +
                         std::to_string(feedback.states()) + ", expected " +
                         std::to_string(sys.m()) + "x" +
                         std::to_string(sys.dim()));
  }
  LinearPolicy policy(feedback);
  return simulate_closed_loop(sys, policy, disturbance, xbar0, options);
}

SafetyAudit safety_audit(const Trajectory& traj,
                         const std::vector<SafetyConstraint>& constraints) {
  SafetyAudit audit;
  for (const auto& c : constraints) {
    ConstraintAudit row{c.label(), std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t k = 0; k < traj.size(); ++k) {
      if (!traj.xbar[k].allFinite()) continue;
      const double h = c.value(traj.x(k));
      if (h < row.min_margin) {
        row.min_margin = h;
        row.argmin_time = traj.t[k];
      }
    }
    if (!(row.min_margin > 0.0)) audit.violated = true;
    audit.constraints.push_back(row);
  }
  if (traj.status == TrajectoryStatus::kSafetyBreach) {
    audit.violated = true;
    audit.breach_time = traj.breach_time;
  }
  return audit;
}

std::vector<double> bas_mismatch_profile(const Trajectory& traj,
                                         const EmbeddedSystem& sys, int index) {
  if (index < 0 || index >= sys.barrier_count()) {
    throw DimensionError("bas_mismatch_profile: barrier index out of range");
  }
  const auto& spec = sys.specs()[index];
  std::vector<double> out;
  out.reserve(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Vector x = traj.x(k);
    const double h = spec.constraint.value(x);
    if (!(h > 0.0)) break;
    const double ideal = spec.barrier.value(h) - spec.beta0;
    out.push_back(std::abs(traj.xbar[k](sys.n() + index) - ideal));
  }
  return out;
}

double bas_consistency(const Trajectory& traj, const EmbeddedSystem& sys,
                       int index) {
  const auto profile = bas_mismatch_profile(traj, sys, index);
  double worst = 0.0;
  for (double v : profile) worst = std::max(worst, v);
  return worst;
}

double issf_case_bound(double d_abs, double k_z) {
  if (!(k_z > 1.0)) {
    throw ModelError("issf_case_bound: the bound needs K_z > 1");
  }
  if (!(d_abs >= 0.0)) {
    throw ModelError("issf_case_bound: |d| must be non-negative");
  }
  return d_abs < 0.5 ? 2.0 * d_abs / k_z : (d_abs + 0.5) / k_z;
}

IssfReport issf_empirical(const EmbeddedSystem& sys,
                          const LinearFeedback& feedback,
                          const DisturbanceSignal& disturbance_family,
                          const ClassKFunction& alpha_z,
                          const ClassKFunction& alpha_u, const Vector& xbar0,
                          const IssfOptions& options) {
  if (options.trials <= 0) {
    throw ModelError("issf_empirical: need at least one trial");
  }
  if (sys.barrier_count() == 0) {
    throw ModelError("issf_empirical: system has no barrier states");
  }
  const int trials = options.trials;

  struct Outcome {
    IssfTrial trial;
    Trajectory traj;
  };
  auto run_one = [&](int k) {
    Outcome out;
    auto& tr = out.trial;
    tr.seed = options.base_seed + static_cast<std::uint64_t>(k);
    out.traj = simulate_closed_loop(sys, feedback,
                                    disturbance_family.with_seed(tr.seed),
                                    xbar0, options.simulation);
    tr.status = out.traj.status;
    tr.safe = out.traj.status != TrajectoryStatus::kSafetyBreach;
    tr.z0_norm = xbar0.tail(sys.barrier_count()).norm();
    for (std::size_t i = 0; i < out.traj.size(); ++i) {
      tr.z_sup = std::max(tr.z_sup, out.traj.z(i).norm());
    }
    tr.d_sup = out.traj.d_sup;
    tr.bound = alpha_z(tr.z0_norm) + alpha_u(tr.d_sup);
    tr.bound_holds = tr.safe &&
                     out.traj.status == TrajectoryStatus::kCompleted &&
                     tr.z_sup <= tr.bound;
    if (options.inspect) options.inspect(k, out.traj);
    if (!options.keep_trajectories) out.traj = Trajectory{};
    return out;
  };

  int workers = options.threads > 0
                    ? options.threads
                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, trials);

  std::vector<Outcome> outcomes(trials);
  std::vector<std::future<void>> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.push_back(std::async(std::launch::async, [&, w] {
      for (int k = w; k < trials; k += workers) outcomes[k] = run_one(k);
    }));
  }
  for (auto& f : pool) f.get();

  IssfReport report;
  int passes = 0;
  for (auto& o : outcomes) {
    if (o.trial.bound_holds) ++passes;
    if (!o.trial.safe) ++report.breaches;
    report.trials.push_back(o.trial);
    if (options.keep_trajectories) report.trajectories.push_back(std::move(o.traj));
  }
  report.pass_fraction = static_cast<double>(passes) / trials;
  return report;
}

RateCheck lyapunov_rate_check(const Trajectory& traj, const EmbeddedSystem& sys,
                              int index, const ClassKFunction& alpha_u,
                              double tolerance,
                              const ExogenousSignal& exogenous) {
  if (index < 0 || index >= sys.barrier_count()) {
    throw DimensionError("lyapunov_rate_check: barrier index out of range");
  }
  const int nw = sys.base().exogenous_dim();
  RateCheck out;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (!traj.xbar[k].allFinite() || first_unsafe(traj.margins[k]) >= 0) break;
    const double z = traj.xbar[k](sys.n() + index);
    const double d_abs = traj.d[k].cwiseAbs().maxCoeff();
    if (std::abs(z) < alpha_u(d_abs)) continue;
    const Vector w = (nw > 0 && exogenous) ? exogenous(traj.t[k])
                                           : Vector(Vector::Zero(nw));
    const double zdot = sys(traj.xbar[k], traj.u[k], w)(sys.n() + index);
    const double rate = 2.0 * z * zdot;
    ++out.checked_points;
    out.worst_rate = std::max(out.worst_rate, rate);
    if (rate > tolerance) ++out.violations;
  }
  return out;
}

}  // namespace safe_embed
