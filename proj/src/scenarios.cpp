#include "safe_embed/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace safe_embed::scenarios {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass:
      return "PASS";
    case Verdict::kFail:
      return "FAIL";
    case Verdict::kDegenerate:
      return "DEGENERATE";
  }
  return "FAIL";
}

Verdict ScenarioResult::verdict() const {
  bool degenerate = false;
  for (const auto& a : assertions) {
    if (a.verdict == Verdict::kFail) return Verdict::kFail;
    if (a.verdict == Verdict::kDegenerate) degenerate = true;
  }
  return degenerate ? Verdict::kDegenerate : Verdict::kPass;
}

const Assertion* ScenarioResult::find(const std::string& id) const {
  for (const auto& a : assertions) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string spectrum_text(const Spectrum& s) {
  std::ostringstream os;
  os << std::setprecision(6) << "{";
  const auto sorted = numkit::sorted(s);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) os << ", ";
    os << sorted[i].real();
    if (sorted[i].imag() != 0.0) {
      os << (sorted[i].imag() > 0 ? "+" : "-") << std::abs(sorted[i].imag())
         << "i";
    }
  }
  os << "}";
  return os.str();
}

Verdict pass_if(bool ok) { return ok ? Verdict::kPass : Verdict::kFail; }

Assertion at_most(std::string id, double observed, double limit) {
  return {std::move(id), "<= " + num(limit), num(observed), num(limit),
          pass_if(observed <= limit)};
}

Assertion below(std::string id, double observed, double limit) {
  return {std::move(id), "< " + num(limit), num(observed), num(limit),
          pass_if(observed < limit)};
}

Assertion above(std::string id, double observed, double limit) {
  return {std::move(id), "> " + num(limit), num(observed), num(limit),
          pass_if(observed > limit)};
}

Assertion equals(std::string id, const std::string& observed,
                 const std::string& expected) {
  return {std::move(id), expected, observed, "exact",
          pass_if(observed == expected)};
}

Spectrum to_spectrum(const Vector& v) {
  Spectrum s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s.emplace_back(v(i), 0.0);
  return s;
}

BarrierFunction barrier_from(const Json& p) {
  if (!p.contains("barrier") || !p.at("barrier").is_string()) {
    throw ConfigError("config: 'barrier' must be a string");
  }
  const std::string name = p.at("barrier").get<std::string>();
  try {
    return make_barrier(barrier_kind_from_string(name));
  } catch (const ModelError&) {
    throw ConfigError("config: unsupported barrier '" + name +
                      "' (expected inverse or log)");
  }
}

FeedbackSign sign_from(const Json& p, const std::string& key) {
  const std::string s = p.at(key).get<std::string>();
  if (s == "negative") return FeedbackSign::kNegative;
  if (s == "additive" || s == "positive") return FeedbackSign::kPositive;
  throw ConfigError("config: '" + key + "' must be 'negative' or 'additive'");
}

SimulationOptions sim_options(const Json& p) {
  SimulationOptions o;
  o.dt = json_number(p, "dt");
  o.horizon = json_number(p, "horizon");
  if (p.contains("substeps")) {
    o.substeps = p.at("substeps").get<int>();
    if (o.substeps < 1) throw ConfigError("config: substeps must be >= 1");
  }
  if (p.contains("local_tol")) {
    o.local_tol = json_number(p, "local_tol");
    if (o.local_tol < 0.0) throw ConfigError("config: local_tol must be >= 0");
  }
  if (!(o.dt > 0.0) || !(o.horizon > 0.0) || o.dt > o.horizon) {
    throw ConfigError("config: need 0 < dt <= horizon");
  }
  return o;
}

int stride_from(const Json& p) {
  const int s = p.at("csv_stride").get<int>();
  if (s < 1) throw ConfigError("config: csv_stride must be >= 1");
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  return (a - b).cwiseAbs().maxCoeff();
}

// Safety, consistency and convergence assertions shared by the
// regulation scenarios.
struct RunSummary {
  double min_margin = INFINITY;
  double sup_input = 0.0;
  double consistency = 0.0;
};

RunSummary summarize(const Trajectory& traj, const EmbeddedSystem& sys) {
  RunSummary s;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    for (Eigen::Index i = 0; i < traj.margins[k].size(); ++i) {
      s.min_margin = std::min(s.min_margin, traj.margins[k](i));
    }
    if (traj.u[k].allFinite()) {
      s.sup_input = std::max(s.sup_input, traj.u[k].cwiseAbs().maxCoeff());
    }
  }
  for (int i = 0; i < sys.barrier_count(); ++i) {
    s.consistency = std::max(s.consistency, bas_consistency(traj, sys, i));
  }
  return s;
}

void add_safety(std::vector<Assertion>& out, const std::string& prefix,
                const Trajectory& traj, const RunSummary& s) {
  out.push_back(equals(prefix + "_status", to_string(traj.status),
                       to_string(TrajectoryStatus::kCompleted)));
  out.push_back(above(prefix + "_min_margin", s.min_margin, 0.0));
}

void add_linearization_checks(std::vector<Assertion>& out,
                              const EmbeddedSystem& sys, const Matrix& a_ref,
                              const Matrix& b_ref) {
  const auto lin = linearize_embedded(sys);
  const auto fd = linearize_fd(sys, lin.state, lin.input);
  out.push_back(at_most("abar_matches_reference", max_abs_diff(lin.a, a_ref),
                        1e-9));
  out.push_back(at_most("bbar_matches_reference", max_abs_diff(lin.b, b_ref),
                        1e-9));
  out.push_back(at_most("analytic_vs_fd", linearization_mismatch(lin, fd), 1e-6));
}

// ------------------------------------------------------------- linear_safe

constexpr double kObstacleMargin = 7.75;  // h at the origin for the defaults

Json linear_safe_defaults() {
  return {{"plant", builtins::default_params("linear2d")},
          {"barrier", "inverse"},
          {"gamma", 1.0},
          {"gain", {2.1143, -5.2857, 4.2902}},
          {"gain_sign", "additive"},
          {"poles", {-2.0, -3.0, -1.0}},
          {"initial_states",
           {{4.0, 4.0}, {3.0, 3.0}, {1.0, 4.0}, {2.0, 4.0},
            {3.0, 4.0}, {4.0, 3.0}, {-3.0, 3.0}, {-3.0, -3.0}}},
          {"horizon", 20.0},
          {"dt", 1e-3},
          {"convergence_tol", 1e-2},
          {"consistency_tol", 1e-5},
          {"csv_stride", 10}};
}

Matrix linear_safe_abar() {
  const double s = kObstacleMargin * kObstacleMargin;
  Matrix a(3, 3);
  a << 1, -5, 0,
       0, -1, 0,
       8 / s, -20 / s, -1;
  return a;
}

Matrix linear_safe_bbar() {
  Matrix b(3, 1);
  b << 0, 1, 4 / (kObstacleMargin * kObstacleMargin);
  return b;
}

std::vector<Vector> initial_states(const Json& p, int dim) {
  std::vector<Vector> out;
  for (const auto& row : p.at("initial_states")) {
    if (!row.is_array() || static_cast<int>(row.size()) != dim) {
      throw ConfigError("config: each initial state needs " +
                        std::to_string(dim) + " entries");
    }
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = row[i].get<double>();
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("config: no initial states");
  return out;
}

void run_linear_safe(const Json& p, ScenarioResult& res) {
  const auto sys = linear_safe_system(p);
  auto& out = res.assertions;
  out.push_back(equals("embedded_dimension", std::to_string(sys.dim()), "3"));
  add_linearization_checks(out, sys, linear_safe_abar(), linear_safe_bbar());

  const auto lin = linearize_embedded(sys);
  const Vector gain = json_vector(p, "gain");
  if (gain.size() != sys.dim()) throw ConfigError("config: gain needs 3 entries");
  LinearFeedback feedback(gain.transpose(), sign_from(p, "gain_sign"));
  const Spectrum poles = to_spectrum(json_vector(p, "poles"));
  if (static_cast<int>(poles.size()) != sys.dim()) {
    throw ConfigError("config: poles needs 3 entries");
  }
  out.push_back(at_most(
      "configured_gain_spectrum",
      numkit::spectrum_distance(synthesis::closed_loop_spectrum(lin, feedback),
                                poles),
      5e-3));
  const auto placed = synthesis::ackermann(lin.a, lin.b, poles);
  LinearFeedback ack(placed.gain, FeedbackSign::kNegative);
  out.push_back(at_most(
      "ackermann_spectrum",
      numkit::spectrum_distance(synthesis::closed_loop_spectrum(lin, ack), poles),
      1e-6));

  const auto opts = sim_options(p);
  const double tol = json_number(p, "convergence_tol");
  const double ctol = json_number(p, "consistency_tol");
  const auto starts = initial_states(p, 2);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::string tag = "ic" + std::to_string(k);
    auto traj = simulate_closed_loop(sys, feedback, DisturbanceSignal::zero(1),
                                     sys.consistent_state(starts[k]), opts);
    const auto s = summarize(traj, sys);
    add_safety(out, tag, traj, s);
    out.push_back(below(tag + "_final_state_norm",
                        traj.final_state().head(2).norm(), tol));
    out.push_back(at_most(tag + "_bas_consistency", s.consistency, ctol));
    res.tracks.push_back({tag, std::move(traj)});
  }
}

// ------------------------------------------------------- input_constrained

Json input_constrained_defaults() {
  return {{"plant", builtins::default_params("linear2d")},
          {"barrier", "inverse"},
          {"gammas", {1.8, 1.4, 1.0}},
          {"gain", {-2.12e3, 5.29e3, -0.101e3, 2.67e3, -24.97e3, -4.29e3}},
          {"gain_sign", "negative"},
          {"reference_gain", {2.1143, -5.2857, 4.2902}},
          {"reference_gain_sign", "additive"},
          {"expected_poles", {-2.0, -3.0, -1000.0}},
          {"pole_rel_tol", 0.02},
          {"initial_states",
           {{4.0, 4.0}, {3.0, 3.0}, {2.0, 4.0}, {3.0, 4.0}, {-2.0, 2.0}}},
          {"initial_input", 0.0},
          {"horizon", 30.0},
          {"dt", 1e-3},
          {"local_tol", 1e-10},
          {"convergence_tol", 1e-2},
          {"consistency_tol", 1e-5},
          {"csv_stride", 10}};
}

Matrix input_constrained_abar() {
  const double s = kObstacleMargin * kObstacleMargin;
  Matrix a = Matrix::Zero(6, 6);
  a(0, 0) = 1;
  a(0, 1) = -5;
  a(1, 1) = -1;
  a(1, 2) = 1;
  a(3, 2) = 1.8 / 25;
  a(3, 3) = -1.8;
  a(4, 2) = -1.4 / 25;
  a(4, 4) = -1.4;
  a(5, 0) = 8 / s;
  a(5, 1) = -20 / s;
  a(5, 2) = 4 / s;
  a(5, 5) = -1;
  return a;
}

Matrix input_constrained_bbar() {
  Matrix b = Matrix::Zero(6, 1);
  b(2, 0) = 1;
  b(3, 0) = 1.0 / 25;
  b(4, 0) = -1.0 / 25;
  return b;
}

void run_input_constrained(const Json& p, ScenarioResult& res) {
  const auto sys = input_constrained_system(p);
  auto& out = res.assertions;
  out.push_back(equals("embedded_dimension", std::to_string(sys.dim()), "6"));
  add_linearization_checks(out, sys, input_constrained_abar(),
                           input_constrained_bbar());

  const auto lin = linearize_embedded(sys);
  const Vector gain = json_vector(p, "gain");
  if (gain.size() != sys.dim()) throw ConfigError("config: gain needs 6 entries");
  LinearFeedback feedback(gain.transpose(), sign_from(p, "gain_sign"));
  const auto spectrum = synthesis::closed_loop_spectrum(lin, feedback);
  const double rel = json_number(p, "pole_rel_tol");
  for (const auto& target : to_spectrum(json_vector(p, "expected_poles"))) {
    double best = INFINITY;
    for (const auto& ev : spectrum) {
      best = std::min(best, std::abs(ev - target) / std::abs(target));
    }
    Assertion a = at_most("spectrum_contains_" + num(target.real()), best, rel);
    a.expected = num(target.real()) + " in " + spectrum_text(spectrum);
    out.push_back(a);
  }

  // Reference controller without input awareness, for the demand check.
  Json ref_params = linear_safe_defaults();
  ref_params["plant"] = p.at("plant");
  ref_params["barrier"] = p.at("barrier");
  ref_params["gamma"] = p.at("gammas").back();
  const auto ref_sys = linear_safe_system(ref_params);
  const Vector ref_gain = json_vector(p, "reference_gain");
  if (ref_gain.size() != ref_sys.dim()) {
    throw ConfigError("config: reference_gain needs 3 entries");
  }
  LinearFeedback ref_feedback(ref_gain.transpose(),
                              sign_from(p, "reference_gain_sign"));

  const double limit = json_number(p.at("plant"), "input_limit");
  const auto opts = sim_options(p);
  const double tol = json_number(p, "convergence_tol");
  const double ctol = json_number(p, "consistency_tol");
  const double u0 = json_number(p, "initial_input");
  const auto starts = initial_states(p, 2);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::string tag = "ic" + std::to_string(k);
    auto ref = simulate_closed_loop(ref_sys, ref_feedback,
                                    DisturbanceSignal::zero(1),
                                    ref_sys.consistent_state(starts[k]), opts);
    out.push_back(above(tag + "_reference_input_demand",
                        summarize(ref, ref_sys).sup_input, limit));

    Vector x0(3);
    x0 << starts[k], u0;
    auto traj = simulate_closed_loop(sys, feedback, DisturbanceSignal::zero(1),
                                     sys.consistent_state(x0), opts);
    const auto s = summarize(traj, sys);
    add_safety(out, tag, traj, s);
    double sup_u = 0.0;
    for (const auto& xb : traj.xbar) sup_u = std::max(sup_u, std::abs(xb(2)));
    out.push_back(below(tag + "_input_bound", sup_u, limit));
    out.push_back(below(tag + "_final_state_norm",
                        traj.final_state().head(2).norm(), tol));
    out.push_back(at_most(tag + "_bas_consistency", s.consistency, ctol));
    res.tracks.push_back({tag, std::move(traj)});
    res.tracks.push_back({tag + "_reference", std::move(ref)});
  }
}

// ---------------------------------------------------------------- ACC

Json acc_common_defaults() {
  return {{"plant", builtins::default_params("acc")},
          {"barrier", "inverse"},
          {"gamma", 1.0},
          {"initial_state", {10.0, 18.0, 150.0}},
          {"dt", 1e-3},
          {"consistency_tol", 1e-5},
          {"csv_stride", 100}};
}

// Leader profiles are test inputs, not part of the published setup.
Json catch_up_profile() {
  return {{"name", "catch_up"}, {"segments", {{20.0, 30.0, 1.2}}}};
}

Json stop_and_go_profile() {
  return {{"name", "stop_and_go"},
          {"segments",
           {{20.0, 30.0, 1.2}, {80.0, 85.0, -2.0}, {110.0, 120.0, 1.0}}}};
}

Json acc_pidb_defaults() {
  Json j = acc_common_defaults();
  j["gain_sets"] = {{{"label", "K1"}, {"gains", {50000.0, 5.0, 50000.0, 50000.0}}},
                    {{"label", "K2"}, {"gains", {1000.0, 5.0, 5000.0, 50000.0}}}};
  j["eigenvalue_targets"] = {{-29.2765, -2.1121, -1.0349, -0.0004},
                             {-2.7977, -2.133, -0.1987, -0.0217}};
  j["eigenvalue_tol"] = 1e-2;
  j["headway_grid_points"] = 2000;
  j["leader_profiles"] = {catch_up_profile(), stop_and_go_profile()};
  j["tracking_tol"] = 0.1;
  j["tracking_hold"] = 30.0;
  j["tracking_tail"] = 5.0;
  j["horizon"] = 250.0;
  return j;
}

Json acc_is3_defaults() {
  Json j = acc_common_defaults();
  j["gains"] = {1000.0, 5.0, 5000.0, 50000.0};
  j["disturbance_ratio"] = 10.0;
  j["z_guard_factor"] = 1000.0;
  j["trials"] = 20;
  j["leader_profile"] = catch_up_profile();
  j["horizon"] = 200.0;
  return j;
}

Vector acc_initial_state(const EmbeddedSystem& sys, const Json& p) {
  const Vector init = json_vector(p, "initial_state");
  if (init.size() != 3) {
    throw ConfigError("config: initial_state is (v_leader, v_follower, distance)");
  }
  Vector x0 = Vector::Zero(5);
  x0.head(3) = init;
  return sys.consistent_state(x0);
}

// Windows [a, b] in which the leader speed stays at or above v_d.
std::vector<std::pair<double, double>> cruise_windows(const Trajectory& traj,
                                                      double vd) {
  std::vector<std::pair<double, double>> out;
  std::optional<double> start;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const bool fast = traj.xbar[k](0) >= vd - 1e-9;
    if (fast && !start) start = traj.t[k];
    if ((!fast || k + 1 == traj.size()) && start) {
      out.emplace_back(*start, traj.t[k]);
      start.reset();
    }
  }
  return out;
}

void add_acc_run_checks(std::vector<Assertion>& out, const std::string& tag,
                        const Trajectory& traj, const EmbeddedSystem& sys,
                        const Json& p) {
  const auto s = summarize(traj, sys);
  add_safety(out, tag, traj, s);
  // Bounded over the horizon: finite throughout and no growth from the
  // first half of the run to the second.
  const double t_mid = 0.5 * traj.t.back();
  double early = 0.0, late = 0.0;
  bool finite = true;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double z = std::abs(traj.xbar[k](5));
    finite = finite && std::isfinite(z);
    (traj.t[k] <= t_mid ? early : late) = std::max(traj.t[k] <= t_mid ? early : late, z);
  }
  out.push_back({tag + "_bas_bounded", "finite and late sup <= early sup",
                 "early sup " + num(early) + ", late sup " + num(late), "-",
                 pass_if(finite && late <= early)});
  out.push_back(
      at_most(tag + "_bas_consistency", s.consistency,
              json_number(p, "consistency_tol")));
}

void run_acc_pidb(const Json& p, ScenarioResult& res) {
  const auto sys = acc_system(p);
  auto& out = res.assertions;
  const double tau = json_number(p.at("plant"), "time_headway");
  const double vd = json_number(p.at("plant"), "desired_speed");
  const double dmax = json_number(p.at("plant"), "desired_distance");
  if (tau == 0.0) {
    out.push_back({"nondegenerate_constraint", "time_headway > 0",
                   "time_headway = 0 (h = D, safety is trivial)", "-",
                   Verdict::kDegenerate});
  }
  const auto& sets = p.at("gain_sets");
  const auto& targets = p.at("eigenvalue_targets");
  const auto& profiles = p.at("leader_profiles");
  const auto opts0 = sim_options(p);
  const double track_tol = json_number(p, "tracking_tol");
  const double hold = json_number(p, "tracking_hold");
  const double tail = json_number(p, "tracking_tail");
  const int grid = p.at("headway_grid_points").get<int>();
  if (grid < 2) throw ConfigError("config: headway_grid_points must be >= 2");

  for (std::size_t g = 0; g < sets.size(); ++g) {
    const std::string label = sets[g].at("label").get<std::string>();
    const Vector gains = json_vector(sets[g], "gains");
    if (gains.size() != 4) throw ConfigError("config: gains are (kp, ki, kd, kb)");
    const auto feedback = acc_feedback(sys, gains);

    if (g < targets.size()) {
      Vector tv(targets[g].size());
      for (std::size_t i = 0; i < targets[g].size(); ++i) {
        tv(i) = targets[g][i].get<double>();
      }
      const auto search = acc_headway_search(sys, feedback, to_spectrum(tv), dmax,
                                             grid);
      Assertion a = at_most(label + "_eigenvalue_regression",
                            search.best_distance,
                            json_number(p, "eigenvalue_tol"));
      a.expected = spectrum_text(to_spectrum(tv)) + " at some D in (" +
                   num(tau * vd) + ", " + num(dmax) + "]";
      a.observed = spectrum_text(search.best_spectrum) + " at D = " +
                   num(search.best_headway) + " (max dev " +
                   num(search.best_distance) + ")";
      out.push_back(a);
    }

    for (const auto& pj : profiles) {
      const auto profile = LeaderProfile::from_json(pj);
      const std::string tag = label + "_" + profile.name();
      auto opts = opts0;
      opts.exogenous = profile.signal();
      auto traj = simulate_closed_loop(sys, feedback, DisturbanceSignal::zero(1),
                                       acc_initial_state(sys, p), opts);
      add_acc_run_checks(out, tag, traj, sys, p);
      int windows = 0;
      for (const auto& [a, b] : cruise_windows(traj, vd)) {
        if (b - a < hold) continue;
        double worst = 0.0;
        for (std::size_t k = 0; k < traj.size(); ++k) {
          if (traj.t[k] >= b - tail && traj.t[k] <= b) {
            worst = std::max(worst, std::abs(traj.xbar[k](1) - vd));
          }
        }
        Assertion t = at_most(tag + "_tracking_" + std::to_string(windows++),
                              worst, track_tol);
        t.expected = "|v_f - v_d| <= " + num(track_tol) + " over [" +
                     num(b - tail) + ", " + num(b) + "] (leader >= v_d on [" +
                     num(a) + ", " + num(b) + "])";
        out.push_back(t);
      }
      if (windows == 0) {
        out.push_back({tag + "_tracking", "a cruise window of >= " + num(hold) + " s",
                       "none in this profile", "-", Verdict::kDegenerate});
      }
      res.tracks.push_back({tag, std::move(traj)});
    }
  }
}

void run_acc_is3(const Json& p, ScenarioResult& res, std::uint64_t seed) {
  const auto sys = acc_system(p);
  auto& out = res.assertions;
  const Vector gains = json_vector(p, "gains");
  if (gains.size() != 4) throw ConfigError("config: gains are (kp, ki, kd, kb)");
  const auto feedback = acc_feedback(sys, gains);
  const double mass = json_number(p.at("plant"), "mass");
  const double grav = json_number(p.at("plant"), "gravity");
  const double bound = json_number(p, "disturbance_ratio") * mass * grav;
  const int trials = p.at("trials").get<int>();
  if (trials < 1) throw ConfigError("config: trials must be >= 1");
  const auto profile = LeaderProfile::from_json(p.at("leader_profile"));

  IssfOptions io;
  io.trials = trials;
  io.base_seed = seed;
  io.simulation = sim_options(p);
  io.simulation.exogenous = profile.signal();
  std::vector<double> z_sup(trials, 0.0), consistency(trials, 0.0);
  io.inspect = [&](int k, const Trajectory& traj) {
    for (const auto& xb : traj.xbar) z_sup[k] = std::max(z_sup[k], std::abs(xb(5)));
    consistency[k] = bas_consistency(traj, sys, 0);
  };
  const auto inf = [](double) { return INFINITY; };
  const Vector x0 = acc_initial_state(sys, p);
  const auto report = issf_empirical(
      sys, feedback, DisturbanceSignal::uniform(1, bound, seed), inf, inf, x0, io);

  out.push_back(equals("safety_breaches", std::to_string(report.breaches), "0"));
  const double beta0 = sys.specs()[0].beta0;
  out.push_back(below("bas_bounded", *std::max_element(z_sup.begin(), z_sup.end()),
                      json_number(p, "z_guard_factor") * beta0));
  double worst_d = 0.0;
  for (const auto& t : report.trials) worst_d = std::max(worst_d, t.d_sup);
  out.push_back(at_most("disturbance_within_bound", worst_d, bound));
  out.push_back(at_most("bas_consistency",
                        *std::max_element(consistency.begin(), consistency.end()),
                        json_number(p, "consistency_tol")));

  // Only the first seed's track is written out.
  auto opts = io.simulation;
  auto traj = simulate_closed_loop(sys, feedback,
                                   DisturbanceSignal::uniform(1, bound, seed), x0,
                                   opts);
  res.tracks.push_back({"seed" + std::to_string(seed), std::move(traj)});
}

// -------------------------------------------------------------- robots

Json robots_defaults() {
  return {{"plant", builtins::default_params("robots2d")},
          {"barrier", "log"},
          {"gamma", 1.0},
          {"q_diag", {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0}},
          {"r_diag", {1.0, 1.0, 1.0, 1.0}},
          {"replan_period", 0.05},
          {"horizon", 30.0},
          {"dt", 1e-3},
          {"target_tol", 0.02},
          {"consistency_tol", 1e-5},
          {"csv_stride", 10}};
}

void run_robots(const Json& p, ScenarioResult& res) {
  const auto sys = robots_system(p);
  auto& out = res.assertions;
  out.push_back(equals("embedded_dimension", std::to_string(sys.dim()), "7"));
  const Vector qd = json_vector(p, "q_diag");
  const Vector rd = json_vector(p, "r_diag");
  if (qd.size() != 7 || rd.size() != 4) {
    throw ConfigError("config: q_diag needs 7 entries and r_diag 4");
  }
  const Matrix q = qd.asDiagonal();
  const Matrix r = rd.asDiagonal();

  const auto lin = linearize_embedded(sys);
  const auto lqr = synthesis::lqr(lin.a, lin.b, q, r);
  const Matrix acl = lin.a - lin.b * lqr.gain;
  out.push_back(below("target_lqr_spectral_abscissa",
                      numkit::spectral_abscissa(acl), 0.0));
  out.push_back(at_most(
      "target_care_residual",
      numkit::norm_inf(numkit::care_residual(lin.a, lin.b, q, r, lqr.cost)),
      1e-7 * (1.0 + numkit::norm_inf(q))));

  const Json& plant = p.at("plant");
  const Vector start = json_vector(plant, "start");
  const Vector target = json_vector(plant, "target");
  const Vector center = json_vector(plant, "obstacle_center");
  const double delta = json_number(plant, "separation");
  const double radius = json_number(plant, "obstacle_radius");

  ReplannedLqrPolicy policy(sys, q, r, sys.equilibrium_state(),
                            json_number(p, "replan_period"));
  auto traj = simulate_closed_loop(sys, policy, DisturbanceSignal::zero(4),
                                   sys.consistent_state(start), sim_options(p));
  const auto s = summarize(traj, sys);
  add_safety(out, "swap", traj, s);
  double min_sep = INFINITY, min_clear = INFINITY;
  for (const auto& xb : traj.xbar) {
    min_sep = std::min(min_sep, (xb.head(2) - xb.segment(2, 2)).norm());
    min_clear = std::min(min_clear, (xb.head(2) - center).norm());
    min_clear = std::min(min_clear, (xb.segment(2, 2) - center).norm());
  }
  out.push_back(at_most("swap_final_target_error",
                        (traj.final_state().head(4) - target).norm(),
                        json_number(p, "target_tol")));
  out.push_back(above("swap_min_separation", min_sep, delta));
  out.push_back(above("swap_min_obstacle_clearance", min_clear, radius));
  out.push_back(at_most("swap_bas_consistency", s.consistency,
                        json_number(p, "consistency_tol")));
  res.tracks.push_back({"swap", std::move(traj)});
}

// ---------------------------------------------------------- case study

Json case_study_defaults() {
  return {{"plant", builtins::default_params("case_study")},
          {"gamma", 1.0},
          {"k_z", 2.0},
          {"initial_state", 1.6},
          {"disturbance_bound", 9.585},
          {"disturbance_decay", 0.5},
          {"trials", 50},
          {"horizon", 20.0},
          {"dt", 1e-3},
          {"rate_tol", 1e-3},
          {"consistency_tol", 1e-5},
          {"csv_stride", 10}};
}

void run_case_study(const Json& p, ScenarioResult& res, std::uint64_t seed) {
  const auto sys = case_study_system(p);
  auto& out = res.assertions;
  const double kz = json_number(p, "k_z");
  if (!(kz > 1.0)) throw ConfigError("config: k_z must exceed 1");
  const double limit = json_number(p.at("plant"), "limit");

  // Closed-form bound values.
  out.push_back(at_most("alpha_u_at_0", std::abs(issf_case_bound(0.0, 2.0)), 1e-15));
  out.push_back(at_most("alpha_u_at_0.4",
                        std::abs(issf_case_bound(0.4, 2.0) - 0.4), 1e-12));
  out.push_back(at_most("alpha_u_at_9.585",
                        std::abs(issf_case_bound(9.585, 2.0) - 5.0425), 1e-12));

  Matrix k(1, 2);
  k << 0.0, kz;
  const LinearFeedback feedback(k, FeedbackSign::kNegative);
  const auto signal = DisturbanceSignal::decreasing(
      1, json_number(p, "disturbance_bound"), json_number(p, "disturbance_decay"),
      seed);
  const auto alpha_u = [kz](double d) { return issf_case_bound(d, kz); };
  const auto alpha_z = [](double z0) { return z0; };
  const int trials = p.at("trials").get<int>();
  if (trials < 1) throw ConfigError("config: trials must be >= 1");

  IssfOptions io;
  io.trials = trials;
  io.base_seed = seed;
  io.simulation = sim_options(p);
  std::vector<RateCheck> rates(trials);
  std::vector<double> consistency(trials, 0.0), x_max(trials, -INFINITY);
  const double rate_tol = json_number(p, "rate_tol");
  io.inspect = [&](int i, const Trajectory& traj) {
    rates[i] = lyapunov_rate_check(traj, sys, 0, alpha_u, rate_tol);
    consistency[i] = bas_consistency(traj, sys, 0);
    for (const auto& xb : traj.xbar) x_max[i] = std::max(x_max[i], xb(0));
  };
  Vector x0(1);
  x0 << json_number(p, "initial_state");
  const Vector xbar0 = sys.consistent_state(x0);
  const auto report = issf_empirical(sys, feedback, signal, alpha_z, alpha_u,
                                     xbar0, io);

  out.push_back(equals("safety_breaches", std::to_string(report.breaches), "0"));
  out.push_back(below("max_state", *std::max_element(x_max.begin(), x_max.end()),
                      limit));
  out.push_back(at_most("issf_bound_miss_fraction", 1.0 - report.pass_fraction, 0.0));
  long checked = 0, violations = 0;
  double worst = -INFINITY;
  for (const auto& r : rates) {
    checked += r.checked_points;
    violations += r.violations;
    worst = std::max(worst, r.worst_rate);
  }
  Assertion rate = equals("rate_check_violations", std::to_string(violations), "0");
  rate.observed += " of " + std::to_string(checked) + " points (max rate " +
                   num(worst) + ")";
  rate.tolerance = num(rate_tol);
  rate.verdict = pass_if(violations == 0);
  out.push_back(rate);
  out.push_back(at_most("bas_consistency",
                        *std::max_element(consistency.begin(), consistency.end()),
                        json_number(p, "consistency_tol")));

  auto traj = simulate_closed_loop(sys, feedback, signal, xbar0, io.simulation);
  res.tracks.push_back({"seed" + std::to_string(seed), std::move(traj)});
}

}  // namespace

// ------------------------------------------------------------ registry

const std::vector<std::string>& scenario_ids() {
  static const std::vector<std::string> ids = {
      "linear_safe", "input_constrained", "acc_pidb",
      "acc_is3",     "robots",            "case_study"};
  return ids;
}

Json scenario_defaults(const std::string& id) {
  if (id == "linear_safe") return linear_safe_defaults();
  if (id == "input_constrained") return input_constrained_defaults();
  if (id == "acc_pidb") return acc_pidb_defaults();
  if (id == "acc_is3") return acc_is3_defaults();
  if (id == "robots") return robots_defaults();
  if (id == "case_study") return case_study_defaults();
  throw ConfigError("unknown scenario '" + id + "'");
}

ScenarioResult run_scenario(const std::string& id, const Json& overrides,
                            std::uint64_t seed, const RunControls& controls) {
  ScenarioResult res;
  res.id = id;
  res.seed = seed;
  Json p = merge_params(scenario_defaults(id), overrides, id);
  if (controls.dt) p["dt"] = *controls.dt;
  if (controls.horizon) p["horizon"] = *controls.horizon;
  res.params = p;
  res.csv_stride = stride_from(p);
  try {
    if (id == "linear_safe") run_linear_safe(p, res);
    else if (id == "input_constrained") run_input_constrained(p, res);
    else if (id == "acc_pidb") run_acc_pidb(p, res);
    else if (id == "acc_is3") run_acc_is3(p, res, seed);
    else if (id == "robots") run_robots(p, res);
    else run_case_study(p, res, seed);
  } catch (const ModelError& e) {
    throw ConfigError(id + ": " + e.what());
  } catch (const Json::exception& e) {
    throw ConfigError(id + ": " + e.what());
  }
  return res;
}

ScenarioResult check_scenario(const std::string& id) {
  return run_scenario(id, Json::object(), 0);
}

// ------------------------------------------------------- building blocks

EmbeddedSystem linear_safe_system(const Json& p) {
  const auto plant = builtins::make_plant("linear2d", p.at("plant"));
  return embed(plant.system, {BarrierRequest{plant.state_constraints[0],
                                             barrier_from(p),
                                             json_number(p, "gamma")}});
}

EmbeddedSystem input_constrained_system(const Json& p) {
  const auto plant = builtins::make_plant("linear2d", p.at("plant"));
  const Vector gammas = json_vector(p, "gammas");
  if (gammas.size() != 3) {
    throw ConfigError("config: gammas is (input upper, input lower, obstacle)");
  }
  const auto barrier = barrier_from(p);
  return input_embed(
      plant.system,
      {BarrierRequest{plant.input_constraints[0], barrier, gammas(0)},
       BarrierRequest{plant.input_constraints[1], barrier, gammas(1)}},
      {BarrierRequest{plant.state_constraints[0], barrier, gammas(2)}});
}

EmbeddedSystem acc_system(const Json& p) {
  const auto plant = builtins::make_plant("acc", p.at("plant"));
  return embed(plant.system, {BarrierRequest{plant.state_constraints[0],
                                             barrier_from(p),
                                             json_number(p, "gamma")}});
}

EmbeddedSystem robots_system(const Json& p) {
  const auto plant = builtins::make_plant("robots2d", p.at("plant"));
  const auto barrier = barrier_from(p);
  const double gamma = json_number(p, "gamma");
  std::vector<BarrierRequest> requests;
  for (const auto& c : plant.state_constraints) {
    requests.push_back(BarrierRequest{c, barrier, gamma});
  }
  return embed(plant.system, requests);
}

EmbeddedSystem case_study_system(const Json& p) {
  const auto plant = builtins::make_plant("case_study", p.at("plant"));
  return embed(plant.system,
               {BarrierRequest{plant.state_constraints[0],
                               make_barrier(BarrierKind::kInverse),
                               json_number(p, "gamma")}});
}

LeaderProfile::LeaderProfile(std::string name, std::vector<Segment> segments)
    : name_(std::move(name)), segments_(std::move(segments)) {
  for (const auto& s : segments_) {
    if (!(s.t1 > s.t0) || s.t0 < 0.0) {
      throw ConfigError("leader profile '" + name_ +
                        "': segments need 0 <= t0 < t1");
    }
  }
}

LeaderProfile LeaderProfile::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("name") || !j.contains("segments")) {
    throw ConfigError("leader profile needs 'name' and 'segments'");
  }
  std::vector<Segment> segs;
  for (const auto& s : j.at("segments")) {
    if (!s.is_array() || s.size() != 3) {
      throw ConfigError("leader profile segments are [t0, t1, acceleration]");
    }
    segs.push_back({s[0].get<double>(), s[1].get<double>(), s[2].get<double>()});
  }
  return LeaderProfile(j.at("name").get<std::string>(), std::move(segs));
}

double LeaderProfile::acceleration(double t) const {
  double a = 0.0;
  for (const auto& s : segments_) {
    if (t >= s.t0 && t < s.t1) a += s.accel;
  }
  return a;
}

double LeaderProfile::speed(double v0, double t) const {
  double v = v0;
  for (const auto& s : segments_) {
    const double end = std::min(t, s.t1);
    if (end > s.t0) v += s.accel * (end - s.t0);
  }
  return v;
}

ExogenousSignal LeaderProfile::signal() const {
  const LeaderProfile copy = *this;
  return [copy](double t) { return Vector::Constant(1, copy.acceleration(t)); };
}

LinearFeedback acc_feedback(const EmbeddedSystem& sys, const Vector& gains) {
  synthesis::PidbGains g;
  g.kp = gains(0);
  g.ki = gains(1);
  g.kd = gains(2);
  g.kb = gains(3);
  g.p_index = 1;
  g.i_index = 3;
  g.d_index = 4;
  g.b_index = 5;
  return synthesis::assemble_pidb(g, sys.dim(), sys.equilibrium_state());
}

Spectrum acc_controlled_spectrum(const EmbeddedSystem& sys,
                                 const LinearFeedback& feedback,
                                 double distance) {
  const Vector eq = sys.equilibrium_state();
  Vector x = eq.head(5);
  x(2) = distance;
  Vector state = sys.consistent_state(x);
  const auto lin = linearize_embedded(sys, state, sys.equilibrium_input());
  const Matrix acl = lin.a - lin.b * feedback.negative_gain();
  const int idx[] = {1, 3, 4, 5};
  Matrix block(4, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) block(r, c) = acl(idx[r], idx[c]);
  }
  return numkit::eigenvalues(block);
}

HeadwaySearch acc_headway_search(const EmbeddedSystem& sys,
                                 const LinearFeedback& feedback,
                                 const Spectrum& targets, double d_max,
                                 int grid_points) {
  const auto& h = sys.specs()[0].constraint;
  Vector probe = sys.equilibrium_state().head(5);
  probe(2) = 0.0;
  const double d_min = -h.value(probe);  // tau * v_d
  const double lo = d_min + 1e-6 * (1.0 + std::abs(d_max - d_min));
  auto cost = [&](double d) {
    return numkit::spectrum_distance(acc_controlled_spectrum(sys, feedback, d),
                                     targets);
  };
  HeadwaySearch best;
  best.best_distance = INFINITY;
  const double step = (d_max - lo) / (grid_points - 1);
  int best_k = 0;
  for (int k = 0; k < grid_points; ++k) {
    const double d = lo + k * step;
    const double c = cost(d);
    if (c < best.best_distance) {
      best.best_distance = c;
      best.best_headway = d;
      best_k = k;
    }
  }
  // Golden-section refinement on the bracketing grid cells.
  double a = lo + std::max(0, best_k - 1) * step;
  double b = lo + std::min(grid_points - 1, best_k + 1) * step;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c1 = b - r * (b - a), c2 = a + r * (b - a);
  double f1 = cost(c1), f2 = cost(c2);
  for (int it = 0; it < 80 && b - a > 1e-10; ++it) {
    if (f1 < f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - r * (b - a);
      f1 = cost(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + r * (b - a);
      f2 = cost(c2);
    }
  }
  const double mid = 0.5 * (a + b);
  const double fm = cost(mid);
  if (fm < best.best_distance) {
    best.best_distance = fm;
    best.best_headway = mid;
  }
  best.best_spectrum = acc_controlled_spectrum(sys, feedback, best.best_headway);
  return best;
}

ReplannedLqrPolicy::ReplannedLqrPolicy(const EmbeddedSystem& sys, Matrix q,
                                       Matrix r, Vector reference, double period)
    : sys_(sys),
      q_(std::move(q)),
      r_(std::move(r)),
      reference_(std::move(reference)),
      period_(period) {
  if (!(period_ > 0.0)) throw ConfigError("replan period must be positive");
  if (reference_.size() != sys_.dim()) {
    throw DimensionError("ReplannedLqrPolicy: reference has the wrong size");
  }
}

void ReplannedLqrPolicy::on_grid_point(double t, const Vector& xbar) {
  if (solves_ > 0 && t < next_update_ - 1e-9) return;
  const auto lin =
      linearize_embedded(sys_, xbar, Vector::Zero(sys_.m()));
  gain_ = synthesis::lqr(lin.a, lin.b, q_, r_).gain;
  ++solves_;
  next_update_ = solves_ * period_;
}

Vector ReplannedLqrPolicy::operator()(double, const Vector& xbar) const {
  return -gain_ * (xbar - reference_);
}

}  // namespace safe_embed::scenarios
