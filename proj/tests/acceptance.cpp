// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
//
// Usage: acceptance <path-to-safe-embed-cli>

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "safe_embed/builtins.hpp"
#include "safe_embed/numkit.hpp"
#include "safe_embed/scenarios.hpp"
#include "safe_embed/synthesis.hpp"

namespace fs = std::filesystem;
using namespace safe_embed;
using scenarios::Verdict;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int index, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << index << "] " << name << "  "
            << o.detail << std::endl;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct TimedResult {
  scenarios::ScenarioResult result;
  double seconds = 0.0;
};

std::map<std::string, TimedResult> results;

const TimedResult& checked(const std::string& id) {
  auto it = results.find(id);
  if (it == results.end()) {
    const auto start = std::chrono::steady_clock::now();
    auto res = scenarios::check_scenario(id);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    it = results.emplace(id, TimedResult{std::move(res), took.count()}).first;
  }
  return it->second;
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

// Every assertion whose id satisfies `select` must pass; returns the count.
int require_passing(const scenarios::ScenarioResult& res,
                    const std::function<bool(const std::string&)>& select, Outcome& o) {
  int count = 0;
  for (const auto& a : res.assertions) {
    if (!select(a.id)) continue;
    ++count;
    if (a.verdict != Verdict::kPass) {
      o.pass = false;
      o.detail += a.id + " " + scenarios::to_string(a.verdict) + " (" + a.observed + "); ";
    }
  }
  return count;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// ------------------------------------------------------------------ 1

Outcome bas_identity() {
  Outcome o;
  double worst = 0.0, slowest = 0.0;
  int runs = 0;
  for (const auto& id : scenarios::scenario_ids()) {
    const auto& r = checked(id);
    slowest = std::max(slowest, r.seconds);
    if (r.seconds >= 10.0) {
      o.pass = false;
      o.detail += id + " took " + fmt(r.seconds) + " s; ";
    }
    for (const auto& a : r.result.assertions) {
      if (!ends_with(a.id, "bas_consistency")) continue;
      ++runs;
      const double v = std::stod(a.observed);
      worst = std::max(worst, v);
      if (!(v <= 1e-5)) {
        o.pass = false;
        o.detail += id + "/" + a.id + " = " + a.observed + "; ";
      }
    }
  }
  if (runs == 0) o.pass = false;
  o.detail += "max identity error " + fmt(worst) + " over " + std::to_string(runs) +
              " runs (<= 1e-05), slowest scenario " + fmt(slowest) + " s (< 10 s)";
  return o;
}

// ------------------------------------------------------------------ 2

double worst_fd_mismatch(const EmbeddedSystem& sys, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  double worst = linearization_mismatch(
      linearize_embedded(sys), linearize_fd(sys, sys.equilibrium_state(), sys.equilibrium_input()));
  int done = 0;
  for (int attempt = 0; attempt < 400 && done < 10; ++attempt) {
    Vector x = sys.equilibrium_state().head(sys.n());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += 0.05 * (1.0 + std::abs(x(i))) * g(rng);
    Vector xbar;
    try {
      xbar = sys.consistent_state(x);
    } catch (const SafetyBreach&) {
      continue;
    }
    if (sys.margins(xbar).minCoeff() < 0.05) continue;
    for (int i = sys.n(); i < sys.dim(); ++i) xbar(i) += 0.01 * g(rng);
    Vector u = sys.equilibrium_input();
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) += g(rng);
    worst = std::max(worst, linearization_mismatch(linearize_embedded(sys, xbar, u),
                                                   linearize_fd(sys, xbar, u)));
    ++done;
  }
  return worst;
}

Outcome linearization() {
  Outcome o;
  const double s = 7.75 * 7.75;
  const auto planar = scenarios::linear_safe_system(scenarios::scenario_defaults("linear_safe"));
  Matrix a3(3, 3);
  a3 << 1, -5, 0, 0, -1, 0, 8 / s, -20 / s, -1;
  Vector b3(3);
  b3 << 0, 1, 4 / s;
  const auto lin3 = linearize_embedded(planar);
  const double e3 = std::max(max_abs(lin3.a - a3), max_abs(lin3.b - b3));

  const auto bounded = scenarios::input_constrained_system(
      scenarios::scenario_defaults("input_constrained"));
  Matrix a6 = Matrix::Zero(6, 6);
  a6.row(0) << 1, -5, 0, 0, 0, 0;
  a6.row(1) << 0, -1, 1, 0, 0, 0;
  a6.row(3) << 0, 0, 1.8 / 25, -1.8, 0, 0;
  a6.row(4) << 0, 0, -1.4 / 25, 0, -1.4, 0;
  a6.row(5) << 8 / s, -20 / s, 4 / s, 0, 0, -1;
  Vector b6(6);
  b6 << 0, 0, 1, 1.0 / 25, -1.0 / 25, 0;
  const auto lin6 = linearize_embedded(bounded);
  const double e6 = std::max(max_abs(lin6.a - a6), max_abs(lin6.b - b6));

  double fd = 0.0;
  std::uint64_t seed = 1;
  for (const auto& id : scenarios::scenario_ids()) {
    const Json p = scenarios::scenario_defaults(id);
    EmbeddedSystem sys = id == "linear_safe"         ? scenarios::linear_safe_system(p)
                         : id == "input_constrained" ? scenarios::input_constrained_system(p)
                         : id == "robots"            ? scenarios::robots_system(p)
                         : id == "case_study"        ? scenarios::case_study_system(p)
                                                     : scenarios::acc_system(p);
    fd = std::max(fd, worst_fd_mismatch(sys, seed++));
  }
  o.pass = e3 <= 1e-9 && e6 <= 1e-9 && fd <= 1e-6;
  o.detail = "3-state reference error " + fmt(e3) + ", 6-state " + fmt(e6) +
             " (<= 1e-09); analytic vs finite differences " + fmt(fd) + " (<= 1e-06)";
  return o;
}

// ------------------------------------------------------------------ 3

Outcome pole_placement() {
  const auto lin = linearize_embedded(
      scenarios::linear_safe_system(scenarios::scenario_defaults("linear_safe")));
  const Spectrum poles{{-2, 0}, {-3, 0}, {-1, 0}};
  const auto placed = synthesis::ackermann(lin.a, lin.b, poles);
  const double placed_err =
      numkit::spectrum_distance(numkit::eigenvalues(lin.a - lin.b * placed.gain), poles);
  Matrix k(1, 3);
  k << 2.1143, -5.2857, 4.2902;
  const double published_err = numkit::spectrum_distance(
      synthesis::closed_loop_spectrum(lin, LinearFeedback(k, FeedbackSign::kPositive)), poles);
  Outcome o;
  o.pass = placed_err <= 1e-6 && published_err <= 5e-3;
  o.detail = "placed spectrum error " + fmt(placed_err) + " (<= 1e-06), published gain " +
             fmt(published_err) + " (<= 5e-03)";
  return o;
}

// ------------------------------------------------------------------ 4

Outcome input_constraints() {
  Outcome o;
  const auto& r = checked("input_constrained").result;
  const auto has = [](const char* tag) {
    return [tag](const std::string& id) { return id.find(tag) != std::string::npos; };
  };
  const int bounds = require_passing(r, has("input_bound"), o);
  const int demand = require_passing(r, has("reference_input_demand"), o);
  const int conv = require_passing(r, has("final_state_norm"), o);
  const int safe = require_passing(r, has("_status"), o);
  const int spec = require_passing(r, has("spectrum_contains"), o);
  const double horizon = r.params.at("horizon").get<double>();
  if (bounds == 0 || demand != bounds || conv != bounds || safe != bounds || spec != 3 ||
      horizon > 30.0) {
    o.pass = false;
    o.detail += "incomplete assertion set; ";
  }
  o.detail += std::to_string(bounds) + " starts with reference demand > 5 keep |u| < 5 and "
              "converge by T = " + fmt(horizon) + "; spectrum holds -2, -3, -1000 within 2%";
  return o;
}

// ------------------------------------------------------------------ 5

Outcome case_study() {
  Outcome o;
  const auto& r = checked("case_study").result;
  const int trials = r.params.at("trials").get<int>();
  const int n = require_passing(r, [](const std::string&) { return true; }, o);
  const double a0 = issf_case_bound(0.0, 2.0);
  const double a1 = issf_case_bound(0.4, 2.0);
  const double a2 = issf_case_bound(9.585, 2.0);
  if (trials != 50 || a0 != 0.0 || std::abs(a1 - 0.4) > 1e-12 || std::abs(a2 - 5.0425) > 1e-12) {
    o.pass = false;
  }
  const auto* rate = r.find("rate_check_violations");
  o.detail += std::to_string(n) + " assertions over " + std::to_string(trials) +
              " seeds; rate check " + (rate ? rate->observed : "missing") +
              "; alpha_u(0, 0.4, 9.585) = " + fmt(a0) + ", " + fmt(a1) + ", " + fmt(a2);
  return o;
}

// ------------------------------------------------------------------ 6

Outcome acc_pidb() {
  const auto& r = checked("acc_pidb").result;
  Outcome safety, tracking, bounded, eig;
  const auto contains = [](const char* tag) {
    return [tag](const std::string& id) { return id.find(tag) != std::string::npos; };
  };
  const int ns = require_passing(r, contains("_min_margin"), safety) +
                 require_passing(r, contains("_status"), safety);
  const int nt = require_passing(r, contains("_tracking"), tracking);
  const int nb = require_passing(r, contains("_bas_bounded"), bounded);
  const int ne = require_passing(r, contains("_eigenvalue_regression"), eig);
  Outcome o;
  o.pass = safety.pass && tracking.pass && bounded.pass && eig.pass && ns > 0 && nt > 0 &&
           nb > 0 && ne == 2;
  const auto part = [](const char* name, const Outcome& p, int n) {
    return std::string(name) + " " + (p.pass && n > 0 ? "ok" : "FAIL") + " (" +
           std::to_string(n) + ")";
  };
  o.detail = part("safety", safety, ns) + ", " + part("tracking", tracking, nt) + ", " +
             part("barrier bounded", bounded, nb) + ", " + part("eigenvalues", eig, ne);
  if (!eig.pass) o.detail += ": " + eig.detail;
  return o;
}

// ------------------------------------------------------------------ 7, 8

Outcome whole_scenario(const std::string& id) {
  Outcome o;
  const auto& r = checked(id).result;
  const int n = require_passing(r, [](const std::string&) { return true; }, o);
  if (n == 0) o.pass = false;
  o.detail += std::to_string(n) + " assertions";
  for (const auto& a : r.assertions) {
    if (a.id == "safety_breaches" || a.id == "bas_bounded" || a.id == "swap_final_target_error" ||
        a.id == "swap_min_separation" || a.id == "swap_min_obstacle_clearance" ||
        a.id == "target_lqr_spectral_abscissa") {
      o.detail += "; " + a.id + " " + a.observed + " (" + a.expected + ")";
    }
  }
  return o;
}

// ------------------------------------------------------------------ 9

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Outcome numerics() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  const auto draw = [&](Eigen::Index r, Eigen::Index c) {
    return Matrix(Matrix::NullaryExpr(r, c, [&] { return g(rng); }));
  };

  double worst_res = 0.0;
  int not_hurwitz = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 6, m = 1 + trial % 3;
    const Matrix a = draw(n, n), b = draw(n, m), cq = draw(n, n), cr = draw(m, m);
    const Matrix q = cq * cq.transpose() + 0.1 * Matrix::Identity(n, n);
    const Matrix r = cr * cr.transpose() + Matrix::Identity(m, m);
    const Matrix p = numkit::solve_care(a, b, q, r);
    worst_res = std::max(worst_res, max_abs(numkit::care_residual(a, b, q, r, p)));
    if (!numkit::is_hurwitz(a - b * r.llt().solve(b.transpose() * p))) ++not_hurwitz;
  }

  double worst_lyap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    Matrix a = draw(n, n);
    const double shift = numkit::spectral_abscissa(a);
    a -= (shift + 0.5) * Matrix::Identity(n, n);
    const Matrix gq = draw(n, n);
    const Matrix q = gq * gq.transpose() + Matrix::Identity(n, n);
    const Matrix p = numkit::solve_lyapunov(a, q);
    const Matrix id = Matrix::Identity(n, n);
    const Matrix big = kron(id, a.transpose()) + kron(a.transpose(), id);
    const Vector vq = Eigen::Map<const Vector>(q.data(), n * n);
    const Vector vp = big.fullPivLu().solve(-vq);
    const Matrix oracle = Eigen::Map<const Matrix>(vp.data(), n, n);
    worst_lyap = std::max(worst_lyap, max_abs(p - oracle) / (1.0 + oracle.norm()));
  }

  const numkit::TimeField f = [](double t, const Vector& x) { return Vector(x * std::cos(t)); };
  const double exact = std::exp(std::sin(2.0));
  std::vector<double> errs;
  for (double dt : {0.1, 0.05, 0.025, 0.0125}) {
    errs.push_back(std::abs(numkit::rk4_integrate(f, Vector::Ones(1), {0.0, 2.0}, dt).x.back()(0) -
                            exact));
  }
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double order = std::log2(errs[i - 1] / errs[i]);
    lo = std::min(lo, order);
    hi = std::max(hi, order);
  }

  o.pass = worst_res <= 1e-7 && not_hurwitz == 0 && worst_lyap <= 1e-8 && lo >= 3.7 && hi <= 4.3;
  o.detail = "CARE residual " + fmt(worst_res) + " (<= 1e-07), non-Hurwitz " +
             std::to_string(not_hurwitz) + "/100; Lyapunov vs Kronecker " + fmt(worst_lyap) +
             " (<= 1e-08); RK4 observed order " + fmt(lo) + ".." + fmt(hi);
  return o;
}

// ------------------------------------------------------------------ 10

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = s.str();
  }
  return out;
}

Outcome determinism(const std::string& cli) {
  Outcome o;
  if (cli.empty()) {
    o.pass = false;
    o.detail = "no CLI path given";
    return o;
  }
  const fs::path base = fs::temp_directory_path() / "safe_embed_acceptance";
  fs::remove_all(base);
  int files = 0;
  for (const auto& id : scenarios::scenario_ids()) {
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path out = base / ("run" + std::to_string(k));
      const std::string cmd = "\"" + cli + "\" check " + id + " -o \"" + out.string() +
                              "\" > /dev/null 2>&1";
      // Exit status 1 only reports failed assertions; the files are still written.
      const int rc = std::system(cmd.c_str());
      if (rc == -1 || !WIFEXITED(rc) || WEXITSTATUS(rc) > 1) {
        o.pass = false;
        o.detail += id + " exited with " + std::to_string(rc) + "; ";
      }
      runs[k] = csv_files(out / id);
    }
    if (runs[0].empty() || runs[0] != runs[1]) {
      o.pass = false;
      o.detail += id + " outputs differ or are missing; ";
    }
    files += static_cast<int>(runs[0].size());
  }
  fs::remove_all(base);
  o.detail += std::to_string(files) + " CSV files byte-identical across two seed-0 runs";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  report(1, "barrier-state identity and runtime", bas_identity);
  report(2, "linearization regression", linearization);
  report(3, "pole placement", pole_placement);
  report(4, "input-constraint enforcement", input_constraints);
  report(5, "scalar case study", case_study);
  report(6, "cruise control with PIDB gains", acc_pidb);
  report(7, "cruise control under bounded disturbance", [] { return whole_scenario("acc_is3"); });
  report(8, "two-robot swap", [] { return whole_scenario("robots"); });
  report(9, "numerics suite", numerics);
  report(10, "determinism", [&] { return determinism(cli); });
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
