// safe-embed: run, check and inspect barrier-state embedded systems.
//
// Exit codes: 0 success, 1 assertion failure or degenerate configuration,
// 2 invalid configuration or arguments, 3 numerical or synthesis failure.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "safe_embed/config.hpp"
#include "safe_embed/report.hpp"

namespace fs = std::filesystem;
using namespace safe_embed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string scenario;
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> horizon;
  std::vector<double> poles;
  std::vector<double> q_diag;
  std::vector<double> r_diag;
};

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_number(m(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string spectrum_csv(const Spectrum& s) {
  std::string out = "re,im\n";
  for (const auto& ev : numkit::sorted(s)) {
    out += format_number(ev.real()) + ',' + format_number(ev.imag()) + '\n';
  }
  return out;
}

config::RunConfig resolve(const Options& o) {
  config::RunConfig cfg;
  if (!o.config_path.empty() && !o.scenario.empty()) {
    throw ConfigError("give either --scenario or --config, not both");
  }
  if (!o.config_path.empty()) {
    cfg = config::parse_run_config(config::load_json_file(o.config_path));
  } else if (!o.scenario.empty()) {
    scenarios::scenario_defaults(o.scenario);
    cfg.scenario = o.scenario;
  } else {
    throw ConfigError("one of --scenario or --config is required");
  }
  if (o.seed) cfg.seed = o.seed;
  if (o.dt) cfg.dt = o.dt;
  if (o.horizon) cfg.horizon = o.horizon;
  return cfg;
}

fs::path output_root(const Options& o, const config::RunConfig& cfg) {
  if (!o.out.empty()) return o.out;
  if (cfg.out) return *cfg.out;
  if (const char* env = std::getenv("SAFE_EMBED_OUT"); env && *env) return env;
  return "safe_embed_out";
}

int report_result(const scenarios::ScenarioResult& res, const fs::path& root) {
  for (const auto& a : res.assertions) {
    std::cout << scenarios::to_string(a.verdict) << "  " << a.id << "  observed "
              << a.observed << "  expected " << a.expected << '\n';
  }
  for (const auto& path : write_scenario_outputs(root, res)) {
    std::cout << "wrote " << path.string() << '\n';
  }
  const auto v = res.verdict();
  std::cout << res.id << " seed " << res.seed << ": " << scenarios::to_string(v) << '\n';
  return v == scenarios::Verdict::kPass ? kExitOk : kExitAssertion;
}

int cmd_run(const Options& o) {
  const auto cfg = resolve(o);
  const auto root = output_root(o, cfg);
  if (cfg.scenario) {
    if (!cfg.inline_spec.is_null()) {
      throw ConfigError("'controller' applies to synthesize when a scenario is named");
    }
    scenarios::RunControls controls{cfg.dt, cfg.horizon};
    return report_result(scenarios::run_scenario(*cfg.scenario, cfg.overrides,
                                                 cfg.seed.value_or(0), controls),
                         root);
  }
  return report_result(config::run_inline(cfg), root);
}

int cmd_check(const Options& o) {
  if (o.scenario.empty()) throw ConfigError("check needs a scenario id");
  Options local = o;
  local.seed = 0;
  const auto cfg = resolve(local);
  return report_result(scenarios::check_scenario(*cfg.scenario), output_root(o, cfg));
}

Json controller_from_flags(const Options& o, const config::RunConfig& cfg) {
  if (!o.poles.empty()) {
    return Json{{"type", "ackermann"}, {"poles", o.poles}};
  }
  if (!o.q_diag.empty() || !o.r_diag.empty()) {
    return Json{{"type", "lqr"}, {"q", o.q_diag}, {"r", o.r_diag}};
  }
  if (cfg.inline_spec.is_object() && cfg.inline_spec.contains("controller")) {
    return cfg.inline_spec.at("controller");
  }
  throw ConfigError("synthesize needs --poles, --q/--r or a controller block");
}

fs::path artifact_dir(const Options& o, const config::RunConfig& cfg,
                      const std::string& verb) {
  std::string id = cfg.scenario.value_or("");
  if (id.empty()) {
    id = cfg.inline_spec.value("name",
                               cfg.inline_spec.at("system").at("builtin").get<std::string>());
  }
  return output_root(o, cfg) / id / verb;
}

int cmd_synthesize(const Options& o) {
  const auto cfg = resolve(o);
  const auto rep = config::synthesize(cfg, controller_from_flags(o, cfg));
  const auto dir = artifact_dir(o, cfg, "synthesis");
  write_atomic(dir / "gain.csv", matrix_csv(rep.feedback.negative_gain()));
  write_atomic(dir / "spectrum.csv", spectrum_csv(rep.closed_loop));
  write_atomic(dir / "abar.csv", matrix_csv(rep.linearization.a));
  write_atomic(dir / "bbar.csv", matrix_csv(rep.linearization.b));
  std::cout << "method " << rep.method << "\ngain (u = -K xbar)\n"
            << matrix_csv(rep.feedback.negative_gain()) << "closed-loop spectrum\n"
            << spectrum_csv(rep.closed_loop) << "hurwitz "
            << (rep.hurwitz ? "yes" : "no") << "\nwrote " << dir.string() << '\n';
  return rep.hurwitz ? kExitOk : kExitAssertion;
}

int cmd_linearize(const Options& o) {
  const auto cfg = resolve(o);
  const auto sys = config::system_for(cfg);
  const auto lin = linearize_embedded(sys);
  const auto dir = artifact_dir(o, cfg, "linearization");
  write_atomic(dir / "abar.csv", matrix_csv(lin.a));
  write_atomic(dir / "bbar.csv", matrix_csv(lin.b));
  std::cout << "Abar\n" << matrix_csv(lin.a) << "Bbar\n" << matrix_csv(lin.b)
            << "open-loop spectrum\n" << spectrum_csv(numkit::eigenvalues(lin.a))
            << "wrote " << dir.string() << '\n';
  return kExitOk;
}

void add_common(CLI::App* cmd, Options& o, bool with_run_flags) {
  cmd->add_option("-s,--scenario", o.scenario,
                  "Registered scenario id (linear_safe, input_constrained, acc_pidb, "
                  "acc_is3, robots, case_study)");
  cmd->add_option("-c,--config", o.config_path, "JSON run configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out,
                  "Output root directory (default: config 'out', then $SAFE_EMBED_OUT, "
                  "then ./safe_embed_out)");
  if (with_run_flags) {
    cmd->add_option("--seed", o.seed, "Disturbance seed (default 0)");
    cmd->add_option("--dt", o.dt, "Integration and sampling step [s]")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--horizon", o.horizon, "Simulation horizon [s]")
        ->check(CLI::PositiveNumber);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safe-embed: safety embedded control with barrier states"};
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "Run a scenario or inline configuration");
  add_common(run, o, true);

  auto* check = app.add_subcommand(
      "check", "Run a scenario with its defaults and seed 0; exit 1 unless all pass");
  check->add_option("id", o.scenario, "Scenario id")->required();
  check->add_option("-o,--out", o.out, "Output root directory");

  auto* synth = app.add_subcommand(
      "synthesize", "Compute a feedback gain at the embedded equilibrium");
  add_common(synth, o, false);
  synth->add_option("--poles", o.poles, "Real closed-loop poles for Ackermann placement")
      ->delimiter(',');
  synth->add_option("--q", o.q_diag, "LQR state weight diagonal")->delimiter(',');
  synth->add_option("--r", o.r_diag, "LQR input weight diagonal")->delimiter(',');

  auto* lin = app.add_subcommand(
      "linearize", "Write the embedded Jacobians at the equilibrium");
  add_common(lin, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(o);
    if (*check) return cmd_check(o);
    if (*synth) return cmd_synthesize(o);
    return cmd_linearize(o);
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Json::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
