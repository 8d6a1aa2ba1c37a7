#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "safe_embed/config.hpp"
#include "safe_embed/report.hpp"
#include "safe_embed/scenarios.hpp"

namespace safe_embed {
namespace {

using scenarios::Verdict;

TEST(Registry, KnownIdsHaveDefaults) {
  for (const auto& id : scenarios::scenario_ids()) {
    EXPECT_TRUE(scenarios::scenario_defaults(id).is_object()) << id;
  }
  EXPECT_THROW(scenarios::scenario_defaults("pendulum"), ConfigError);
  EXPECT_THROW(scenarios::run_scenario("pendulum"), ConfigError);
}

TEST(Overrides, UnknownKeyOrWrongTypeIsRejected) {
  EXPECT_THROW(scenarios::run_scenario("linear_safe", {{"gamma_typo", 1.0}}), ConfigError);
  EXPECT_THROW(scenarios::run_scenario("linear_safe", {{"gamma", "fast"}}), ConfigError);
  EXPECT_THROW(scenarios::run_scenario("linear_safe", {{"plant", {{"nope", 1}}}}),
               ConfigError);
  EXPECT_THROW(scenarios::run_scenario("linear_safe", {{"gain", {1.0, 2.0}}}), ConfigError);
}

TEST(Overrides, AppliedToEffectiveParameters) {
  scenarios::RunControls controls;
  controls.horizon = 2.0;
  const auto res = scenarios::run_scenario(
      "linear_safe", {{"initial_states", {{4.0, 4.0}}}}, 3, controls);
  EXPECT_EQ(res.seed, 3u);
  EXPECT_DOUBLE_EQ(res.params.at("horizon").get<double>(), 2.0);
  ASSERT_EQ(res.tracks.size(), 1u);
  EXPECT_EQ(res.tracks[0].trajectory.size(), 2001u);
}

TEST(LinearSafe, DefaultsPass) {
  const auto res = scenarios::check_scenario("linear_safe");
  EXPECT_EQ(res.verdict(), Verdict::kPass);
  ASSERT_NE(res.find("ackermann_spectrum"), nullptr);
  EXPECT_EQ(res.find("ackermann_spectrum")->verdict, Verdict::kPass);
  EXPECT_EQ(res.find("missing"), nullptr);
}

TEST(LinearSafe, ZeroedGainFails) {
  scenarios::RunControls controls;
  controls.horizon = 5.0;
  const auto res = scenarios::run_scenario(
      "linear_safe", {{"gain", {0.0, 0.0, 0.0}}, {"initial_states", {{4.0, 4.0}}}}, 0,
      controls);
  EXPECT_EQ(res.verdict(), Verdict::kFail);
  EXPECT_EQ(res.find("configured_gain_spectrum")->verdict, Verdict::kFail);
  EXPECT_EQ(res.find("ic0_final_state_norm")->verdict, Verdict::kFail);
}

TEST(CaseStudy, DefaultsPass) {
  const auto res = scenarios::run_scenario("case_study", {{"trials", 5}}, 0);
  EXPECT_EQ(res.verdict(), Verdict::kPass);
  EXPECT_EQ(res.find("alpha_u_at_9.585")->verdict, Verdict::kPass);
  EXPECT_THROW(scenarios::run_scenario("case_study", {{"k_z", 1.0}}), ConfigError);
}

TEST(Acc, ZeroTimeHeadwayIsDegenerate) {
  scenarios::RunControls controls;
  controls.horizon = 20.0;
  const Json overrides = {{"plant", {{"time_headway", 0.0}}},
                          {"headway_grid_points", 50},
                          {"gain_sets", {{{"label", "K2"}, {"gains", {1000.0, 5.0, 5000.0, 50000.0}}}}},
                          {"eigenvalue_targets", {{-2.7977, -2.133, -0.1987, -0.0217}}}};
  const auto res = scenarios::run_scenario("acc_pidb", overrides, 0, controls);
  const auto* flag = res.find("nondegenerate_constraint");
  ASSERT_NE(flag, nullptr);
  EXPECT_EQ(flag->verdict, Verdict::kDegenerate);
  EXPECT_NE(res.verdict(), Verdict::kPass);
}

TEST(Verdict, FailDominatesDegenerate) {
  scenarios::ScenarioResult r;
  r.assertions.push_back({"a", "", "", "", Verdict::kPass});
  EXPECT_EQ(r.verdict(), Verdict::kPass);
  r.assertions.push_back({"b", "", "", "", Verdict::kDegenerate});
  EXPECT_EQ(r.verdict(), Verdict::kDegenerate);
  r.assertions.push_back({"c", "", "", "", Verdict::kFail});
  EXPECT_EQ(r.verdict(), Verdict::kFail);
  EXPECT_EQ(scenarios::to_string(Verdict::kDegenerate), "DEGENERATE");
}

TEST(LeaderProfile, SumsOverlappingSegmentsAndIntegratesSpeed) {
  const auto p = scenarios::LeaderProfile::from_json(
      {{"name", "test"}, {"segments", {{1.0, 3.0, 2.0}, {2.0, 4.0, -1.0}}}});
  EXPECT_EQ(p.name(), "test");
  EXPECT_DOUBLE_EQ(p.acceleration(0.5), 0.0);
  EXPECT_DOUBLE_EQ(p.acceleration(1.5), 2.0);
  EXPECT_DOUBLE_EQ(p.acceleration(2.5), 1.0);
  EXPECT_DOUBLE_EQ(p.acceleration(3.0), -1.0);
  EXPECT_DOUBLE_EQ(p.acceleration(4.0), 0.0);
  // 10 + 2*2 - 1*2
  EXPECT_DOUBLE_EQ(p.speed(10.0, 5.0), 12.0);
  EXPECT_DOUBLE_EQ(p.speed(10.0, 2.0), 12.0);
  EXPECT_THROW(scenarios::LeaderProfile::from_json({{"name", "x"}}), ConfigError);
  EXPECT_THROW(
      scenarios::LeaderProfile::from_json({{"name", "x"}, {"segments", {{1.0, 2.0}}}}),
      ConfigError);
}

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("safe_embed_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

TEST(Report, CsvLayoutAndStatusColumn) {
  scenarios::RunControls controls;
  controls.horizon = 0.1;
  const auto res = scenarios::run_scenario(
      "linear_safe", {{"initial_states", {{4.0, 4.0}}}, {"csv_stride", 30}}, 0, controls);
  const auto& traj = res.tracks.at(0).trajectory;
  EXPECT_EQ(csv_header(traj), "t,x1,x2,z1,u1,d1,h1,status\n");
  const std::string csv = trajectory_csv(traj, res.csv_stride);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  // Header, rows 0/30/60/90 and the final row 100.
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[1].rfind("0,4,4,", 0), 0u);
  EXPECT_NE(rows[1].find(",ok"), std::string::npos);
  EXPECT_EQ(rows.back().substr(rows.back().rfind(',') + 1), "completed");
  EXPECT_EQ(rows.back().rfind("0.1,", 0), 0u);
}

TEST(Report, AtomicWritesLeaveNoTemporaries) {
  TempDir dir;
  scenarios::RunControls controls;
  controls.horizon = 0.5;
  const auto res = scenarios::run_scenario(
      "linear_safe", {{"initial_states", {{4.0, 4.0}, {3.0, 3.0}}}}, 4, controls);
  const auto written = write_scenario_outputs(dir.path(), res);
  ASSERT_EQ(written.size(), 3u);
  const auto seed_dir = dir.path() / "linear_safe" / "seed4";
  for (const auto& entry : std::filesystem::directory_iterator(seed_dir)) {
    EXPECT_NE(entry.path().extension(), ".tmp") << entry.path();
  }
  const std::string report = slurp(seed_dir / "report.txt");
  EXPECT_NE(report.find("scenario\tlinear_safe\n"), std::string::npos);
  EXPECT_NE(report.find("seed\t4\n"), std::string::npos);
  EXPECT_NE(report.find("assertion\texpected\tobserved\ttolerance\tverdict\n"),
            std::string::npos);
  EXPECT_NE(report.find("ic1_min_margin\t"), std::string::npos);

  // Rewriting yields identical bytes.
  const std::string first = slurp(seed_dir / "ic0.csv");
  write_scenario_outputs(dir.path(), res);
  EXPECT_EQ(slurp(seed_dir / "ic0.csv"), first);
}

TEST(Config, TopLevelValidation) {
  using config::parse_run_config;
  EXPECT_THROW(parse_run_config({{"scenario", "linear_safe"}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"schema_version", 2}, {"scenario", "linear_safe"}}),
               ConfigError);
  EXPECT_THROW(parse_run_config({{"schema_version", 1}}), ConfigError);
  EXPECT_THROW(parse_run_config({{"schema_version", 1},
                                 {"scenario", "linear_safe"},
                                 {"system", {{"builtin", "linear2d"}}}}),
               ConfigError);
  EXPECT_THROW(parse_run_config({{"schema_version", 1}, {"scenario", "linear_safe"},
                                 {"colour", "red"}}),
               ConfigError);
  EXPECT_THROW(parse_run_config({{"schema_version", 1}, {"scenario", "linear_safe"},
                                 {"overrides", {{"gamma", "x"}}}}),
               ConfigError);
  const auto cfg = parse_run_config({{"schema_version", 1},
                                     {"scenario", "acc_is3"},
                                     {"seed", 7},
                                     {"horizon", 3.0}});
  EXPECT_EQ(cfg.scenario.value(), "acc_is3");
  EXPECT_EQ(cfg.seed.value(), 7u);
  EXPECT_DOUBLE_EQ(cfg.horizon.value(), 3.0);
}

TEST(Config, LoadReportsMissingAndMalformedFiles) {
  TempDir dir;
  EXPECT_THROW(config::load_json_file(dir.path() / "absent.json"), ConfigError);
  std::filesystem::create_directories(dir.path());
  const auto bad = dir.path() / "bad.json";
  std::ofstream(bad) << "{\"schema_version\": 1,";
  EXPECT_THROW(config::load_json_file(bad), ConfigError);
}

Json inline_planar(const Json& controller) {
  return {{"schema_version", 1},
          {"system", {{"builtin", "linear2d"}}},
          {"barrier", "inverse"},
          {"gammas", {1.0}},
          {"controller", controller},
          {"initial_state", {4.0, 4.0}},
          {"horizon", 20.0},
          {"assertions", {{"safe", true}, {"final_error_below", 0.01}}}};
}

TEST(Config, InlineRunsEvaluateAssertions) {
  const auto published = config::run_inline(config::parse_run_config(inline_planar(
      {{"type", "gain"}, {"gain", {2.1143, -5.2857, 4.2902}}, {"sign", "additive"}})));
  EXPECT_EQ(published.verdict(), Verdict::kPass);
  ASSERT_EQ(published.tracks.size(), 1u);
  ASSERT_NE(published.find("safe"), nullptr);
  ASSERT_NE(published.find("final_error"), nullptr);

  // The placed gain carries little barrier-state weight, so it is only
  // checked from a start that does not head for the obstacle.
  auto j = inline_planar({{"type", "ackermann"}, {"poles", {-2.0, -3.0, -1.0}}});
  j["initial_state"] = {-3.0, -3.0};
  EXPECT_EQ(config::run_inline(config::parse_run_config(j)).verdict(), Verdict::kPass);
}

TEST(Config, InlineControllersBuildExpectedGains) {
  const auto cfg = config::parse_run_config(
      inline_planar({{"type", "gain"}, {"gain", {2.1143, -5.2857, 4.2902}},
                     {"sign", "additive"}}));
  const auto sys = config::system_for(cfg);
  const auto fb = config::controller_for(sys, cfg.inline_spec.at("controller"));
  EXPECT_EQ(fb.sign, FeedbackSign::kPositive);
  EXPECT_NEAR(fb.gain(0, 2), 4.2902, 1e-15);

  const auto lqr = config::synthesize(
      cfg, {{"type", "lqr"}, {"q", {1.0, 1.0, 1.0}}, {"r", {1.0}}});
  EXPECT_TRUE(lqr.hurwitz);
  EXPECT_EQ(lqr.method, "lqr");
  EXPECT_THROW(config::controller_for(sys, {{"type", "pidb"}, {"gains", {1, 2, 3, 4}}}),
               ConfigError);
  EXPECT_THROW(config::controller_for(sys, {{"type", "magic"}}), ConfigError);
  EXPECT_THROW(config::synthesize(cfg, {{"type", "gain"}, {"gain", {1.0, 1.0, 1.0}}}),
               ConfigError);
}

TEST(Config, InlineZeroControllerIsUnsafe) {
  auto j = inline_planar({{"type", "gain"}, {"gain", {0.0, 0.0, 0.0}}, {"sign", "negative"}});
  j["initial_state"] = {8.0, 3.3};
  const auto res = config::run_inline(config::parse_run_config(j));
  EXPECT_EQ(res.verdict(), Verdict::kFail);
}

}  // namespace
}  // namespace safe_embed
