#include "safe_embed/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace safe_embed::config {

namespace {

void allow_only(const Json& j, const std::set<std::string>& keys,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!keys.count(it.key())) {
      throw ConfigError("config: unknown key '" +
                        (where.empty() ? it.key() : where + "." + it.key()) + "'");
    }
  }
}

// Square matrix from nested arrays or a diagonal list.
Matrix weight_matrix(const Json& j, const std::string& key, int dim) {
  if (!j.contains(key) || !j.at(key).is_array() || j.at(key).empty()) {
    throw ConfigError("config: controller." + key + " must be a non-empty array");
  }
  Matrix m;
  if (j.at(key).front().is_array()) {
    m = json_matrix(j, key);
  } else {
    m = json_vector(j, key).asDiagonal();
  }
  if (m.rows() != dim || m.cols() != dim) {
    throw ConfigError("config: controller." + key + " must be " +
                      std::to_string(dim) + "x" + std::to_string(dim));
  }
  return m;
}

Spectrum poles_from(const Json& c) {
  Spectrum s;
  for (const auto& p : c.at("poles")) {
    if (p.is_number()) {
      s.emplace_back(p.get<double>(), 0.0);
    } else if (p.is_array() && p.size() == 2) {
      s.emplace_back(p[0].get<double>(), p[1].get<double>());
    } else {
      throw ConfigError("config: poles are numbers or [re, im] pairs");
    }
  }
  return s;
}

double optional_number(const Json& j, const std::string& key, double fallback) {
  return j.contains(key) ? json_number(j, key) : fallback;
}

}  // namespace

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " +
                      e.what());
  }
}

RunConfig parse_run_config(const Json& j) {
  allow_only(j,
             {"schema_version", "scenario", "overrides", "seed", "dt", "horizon",
              "out", "name", "system", "barrier", "gammas", "input_constraints",
              "controller", "disturbance", "initial_state", "exogenous",
              "assertions", "trials"},
             "");
  if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer() ||
      j.at("schema_version").get<int>() != kSchemaVersion) {
    throw ConfigError("config: schema_version must be " +
                      std::to_string(kSchemaVersion));
  }
  RunConfig cfg;
  const bool has_scenario = j.contains("scenario");
  const bool has_system = j.contains("system");
  if (has_scenario == has_system) {
    throw ConfigError("config: give exactly one of 'scenario' or 'system'");
  }
  if (j.contains("seed")) {
    const Json& s = j.at("seed");
    if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0)) {
      throw ConfigError("config: seed must be a non-negative integer");
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("dt")) cfg.dt = json_number(j, "dt");
  if (j.contains("horizon")) cfg.horizon = json_number(j, "horizon");
  if (j.contains("out")) {
    if (!j.at("out").is_string()) throw ConfigError("config: out must be a string");
    cfg.out = j.at("out").get<std::string>();
  }
  if (has_scenario) {
    for (const char* k : {"system", "barrier", "gammas", "input_constraints",
                          "disturbance", "initial_state", "exogenous", "assertions",
                          "trials", "name"}) {
      if (j.contains(k)) {
        throw ConfigError(std::string("config: '") + k +
                          "' only applies to inline systems");
      }
    }
    if (!j.at("scenario").is_string()) {
      throw ConfigError("config: scenario must be a string");
    }
    cfg.scenario = j.at("scenario").get<std::string>();
    const Json defaults = scenarios::scenario_defaults(*cfg.scenario);
    if (j.contains("overrides")) {
      merge_params(defaults, j.at("overrides"), *cfg.scenario);
      cfg.overrides = j.at("overrides");
    }
    if (j.contains("controller")) cfg.inline_spec = Json{{"controller", j.at("controller")}};
    return cfg;
  }
  if (j.contains("overrides")) {
    throw ConfigError("config: 'overrides' only applies to scenarios");
  }
  cfg.inline_spec = j;
  build_inline_system(j);  // validates the system block eagerly
  if (j.contains("controller")) {
    allow_only(j.at("controller"), {"type", "gain", "sign", "poles", "q", "r", "gains"},
               "controller");
  }
  if (j.contains("disturbance")) {
    allow_only(j.at("disturbance"), {"kind", "bound", "decay_rate", "channels"},
               "disturbance");
    try {
      disturbance_kind_from_string(j.at("disturbance").value("kind", "zero"));
    } catch (const ModelError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  if (j.contains("exogenous")) {
    allow_only(j.at("exogenous"), {"leader_segments"}, "exogenous");
  }
  if (j.contains("assertions")) {
    allow_only(j.at("assertions"), {"safe", "final_error_below"}, "assertions");
  }
  return cfg;
}

EmbeddedSystem build_inline_system(const Json& spec) {
  const Json& system = spec.at("system");
  allow_only(system, {"builtin", "params"}, "system");
  if (!system.contains("builtin") || !system.at("builtin").is_string()) {
    throw ConfigError("config: system.builtin must name a builtin");
  }
  const std::string name = system.at("builtin").get<std::string>();
  const auto plant =
      builtins::make_plant(name, system.value("params", Json::object()));
  BarrierKind kind = BarrierKind::kInverse;
  if (spec.contains("barrier")) {
    try {
      kind = barrier_kind_from_string(spec.at("barrier").get<std::string>());
      make_barrier(kind);
    } catch (const ModelError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  const auto barrier = make_barrier(kind);
  const bool inputs = spec.value("input_constraints", false);
  if (inputs && plant.input_constraints.empty()) {
    throw ConfigError("config: builtin '" + name + "' has no input constraints");
  }
  const std::size_t count =
      plant.state_constraints.size() + (inputs ? plant.input_constraints.size() : 0);
  Vector gammas = Vector::Ones(static_cast<Eigen::Index>(count));
  if (spec.contains("gammas")) gammas = json_vector(spec, "gammas");
  if (static_cast<std::size_t>(gammas.size()) != count) {
    throw ConfigError("config: gammas needs " + std::to_string(count) +
                      " entries (input constraints first)");
  }
  try {
    std::vector<BarrierRequest> input_req, state_req;
    int g = 0;
    if (inputs) {
      for (const auto& c : plant.input_constraints) {
        input_req.push_back({c, barrier, gammas(g++)});
      }
    }
    for (const auto& c : plant.state_constraints) {
      state_req.push_back({c, barrier, gammas(g++)});
    }
    return inputs ? input_embed(plant.system, input_req, state_req)
                  : embed(plant.system, state_req);
  } catch (const ModelError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

EmbeddedSystem system_for(const RunConfig& cfg) {
  if (!cfg.scenario) return build_inline_system(cfg.inline_spec);
  const std::string& id = *cfg.scenario;
  const Json p = merge_params(scenarios::scenario_defaults(id), cfg.overrides, id);
  if (id == "linear_safe") return scenarios::linear_safe_system(p);
  if (id == "input_constrained") return scenarios::input_constrained_system(p);
  if (id == "acc_pidb" || id == "acc_is3") return scenarios::acc_system(p);
  if (id == "robots") return scenarios::robots_system(p);
  return scenarios::case_study_system(p);
}

LinearFeedback controller_for(const EmbeddedSystem& sys, const Json& c) {
  allow_only(c, {"type", "gain", "sign", "poles", "q", "r", "gains"}, "controller");
  const std::string type = c.value("type", "");
  const Vector ref = sys.equilibrium_state();
  const Vector uref = sys.equilibrium_input();
  if (type == "gain") {
    Matrix k;
    if (c.contains("gain") && c.at("gain").is_array() && !c.at("gain").empty() &&
        c.at("gain").front().is_number()) {
      k = json_vector(c, "gain").transpose();
    } else {
      k = json_matrix(c, "gain");
    }
    if (k.rows() != sys.m() || k.cols() != sys.dim()) {
      throw ConfigError("config: controller.gain must be " + std::to_string(sys.m()) +
                        "x" + std::to_string(sys.dim()));
    }
    const std::string sign = c.value("sign", "negative");
    if (sign != "negative" && sign != "additive") {
      throw ConfigError("config: controller.sign must be negative or additive");
    }
    return LinearFeedback(k, sign == "negative" ? FeedbackSign::kNegative
                                                : FeedbackSign::kPositive,
                          ref, uref);
  }
  if (type == "ackermann") {
    const auto lin = linearize_embedded(sys);
    const auto placed = synthesis::ackermann(lin.a, lin.b, poles_from(c));
    return LinearFeedback(placed.gain, FeedbackSign::kNegative, ref, uref);
  }
  if (type == "lqr") {
    const auto lin = linearize_embedded(sys);
    const auto res = synthesis::lqr(lin.a, lin.b, weight_matrix(c, "q", sys.dim()),
                                    weight_matrix(c, "r", sys.m()));
    return LinearFeedback(res.gain, FeedbackSign::kNegative, ref, uref);
  }
  if (type == "pidb") {
    if (sys.base().name() != "acc") {
      throw ConfigError("config: pidb controllers apply to the acc builtin only");
    }
    const Vector g = json_vector(c, "gains");
    if (g.size() != 4) throw ConfigError("config: pidb gains are (kp, ki, kd, kb)");
    return scenarios::acc_feedback(sys, g);
  }
  throw ConfigError("config: controller.type must be gain, ackermann, lqr or pidb");
}

scenarios::ScenarioResult run_inline(const RunConfig& cfg) {
  const Json& spec = cfg.inline_spec;
  const auto sys = build_inline_system(spec);
  if (!spec.contains("controller")) throw ConfigError("config: controller is required");
  const auto feedback = controller_for(sys, spec.at("controller"));

  const std::uint64_t seed = cfg.seed.value_or(0);
  DisturbanceSignal dist = DisturbanceSignal::zero(sys.m());
  if (spec.contains("disturbance")) {
    const Json& d = spec.at("disturbance");
    try {
      dist.kind = disturbance_kind_from_string(d.value("kind", "zero"));
    } catch (const ModelError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (dist.kind == DisturbanceKind::kSamples) {
      throw ConfigError("config: sample-table disturbances are library-only");
    }
    dist.bound = optional_number(d, "bound", 0.0);
    dist.decay_rate = optional_number(d, "decay_rate", 0.0);
    dist.seed = seed;
    if (d.contains("channels")) {
      for (const auto& ch : d.at("channels")) dist.channels.push_back(ch.get<int>());
    }
    if (dist.bound < 0.0) throw ConfigError("config: disturbance bound must be >= 0");
  }

  if (!spec.contains("initial_state")) {
    throw ConfigError("config: initial_state is required");
  }
  const Vector x0 = json_vector(spec, "initial_state");
  if (x0.size() != sys.n()) {
    throw ConfigError("config: initial_state needs " + std::to_string(sys.n()) +
                      " entries");
  }
  Vector xbar0;
  try {
    xbar0 = sys.consistent_state(x0);
  } catch (const SafetyBreach& e) {
    throw ConfigError(std::string("config: initial state is unsafe: ") + e.what());
  }

  SimulationOptions opts;
  opts.dt = cfg.dt.value_or(1e-3);
  opts.horizon = cfg.horizon.value_or(10.0);
  if (!(opts.dt > 0.0) || !(opts.horizon >= opts.dt)) {
    throw ConfigError("config: need 0 < dt <= horizon");
  }
  if (spec.contains("exogenous")) {
    if (sys.base().exogenous_dim() != 1) {
      throw ConfigError("config: exogenous signals apply to the acc builtin only");
    }
    const auto profile = scenarios::LeaderProfile::from_json(
        {{"name", "leader"}, {"segments", spec.at("exogenous").at("leader_segments")}});
    opts.exogenous = profile.signal();
  }

  scenarios::ScenarioResult res;
  res.id = spec.value("name", spec.at("system").at("builtin").get<std::string>());
  res.seed = seed;
  res.params = spec;
  auto traj = simulate_closed_loop(sys, feedback, dist, xbar0, opts);

  const Json asserts = spec.value("assertions", Json::object());
  if (asserts.value("safe", false)) {
    const bool ok = traj.status == TrajectoryStatus::kCompleted;
    res.assertions.push_back({"safe", "completed without breach",
                              to_string(traj.status), "-",
                              ok ? scenarios::Verdict::kPass
                                 : scenarios::Verdict::kFail});
  }
  if (asserts.contains("final_error_below")) {
    const double tol = json_number(asserts, "final_error_below");
    const double err =
        (traj.final_state().head(sys.n()) - sys.equilibrium_state().head(sys.n()))
            .norm();
    std::ostringstream os;
    os << err;
    res.assertions.push_back({"final_error", "< " + std::to_string(tol), os.str(),
                              std::to_string(tol),
                              err < tol ? scenarios::Verdict::kPass
                                        : scenarios::Verdict::kFail});
  }
  res.tracks.push_back({"trajectory", std::move(traj)});
  return res;
}

SynthesisReport synthesize(const RunConfig& cfg, const Json& controller) {
  const auto sys = system_for(cfg);
  const std::string type = controller.value("type", "");
  if (type != "ackermann" && type != "lqr") {
    throw ConfigError("config: synthesize needs an ackermann or lqr controller");
  }
  SynthesisReport rep;
  rep.method = type;
  rep.linearization = linearize_embedded(sys);
  rep.feedback = controller_for(sys, controller);
  rep.closed_loop = synthesis::closed_loop_spectrum(rep.linearization, rep.feedback);
  rep.hurwitz = true;
  for (const auto& ev : rep.closed_loop) rep.hurwitz = rep.hurwitz && ev.real() < 0.0;
  return rep;
}

}  // namespace safe_embed::config
