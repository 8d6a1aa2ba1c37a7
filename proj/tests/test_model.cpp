#include <gtest/gtest.h>

#include <cmath>

#include "safe_embed/model.hpp"

namespace safe_embed {

inline void PrintTo(BarrierKind kind, std::ostream* os) { *os << to_string(kind); }

namespace {

// B^-1 by bisection on the strictly decreasing barrier.
double invert_numerically(const BarrierFunction& b, double beta) {
  double lo = 1e-12, hi = 1e12;
  for (int i = 0; i < 400; ++i) {
    const double mid = std::sqrt(lo * hi);
    (b.value(mid) > beta ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

double central_slope(const std::function<double(double)>& f, double x) {
  const double h = 1e-6 * (1.0 + std::abs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

class BarrierKinds : public ::testing::TestWithParam<BarrierKind> {};

TEST_P(BarrierKinds, PositiveDecreasingAndSingularAtZero) {
  const auto b = make_barrier(GetParam());
  double previous = b.value(1e-6);
  EXPECT_GT(previous, b.value(1e-3) + 5.0);
  for (double eta = 1e-3; eta < 100.0; eta *= 1.7) {
    const double v = b.value(eta);
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, previous);
    EXPECT_LT(b.slope(eta), 0.0);
    EXPECT_GT(b.curvature(eta), 0.0);
    previous = v;
  }
  EXPECT_THROW(b.value(0.0), ModelError);
  EXPECT_THROW(b.value(-1.0), ModelError);
}

TEST_P(BarrierKinds, DerivativesMatchFiniteDifferences) {
  const auto b = make_barrier(GetParam());
  for (double eta : {0.05, 0.3, 1.0, 4.0}) {
    const double slope = central_slope([&](double e) { return b.value(e); }, eta);
    EXPECT_NEAR(b.slope(eta), slope, 1e-6 * (1.0 + std::abs(slope)));
    const double curv = central_slope([&](double e) { return b.slope(e); }, eta);
    EXPECT_NEAR(b.curvature(eta), curv, 1e-5 * (1.0 + std::abs(curv)));
  }
}

TEST_P(BarrierKinds, PhiIsSlopeAtTheInverse) {
  const auto b = make_barrier(GetParam());
  for (double beta : {0.05, 0.4, 1.0, 3.0, 25.0}) {
    const double eta = invert_numerically(b, beta);
    EXPECT_NEAR(b.inverse(beta), eta, 1e-9 * (1.0 + eta));
    EXPECT_NEAR(b.phi(beta), b.slope(eta), 1e-8 * (1.0 + std::abs(b.slope(eta))));
    const double dphi = central_slope([&](double v) { return b.phi(v); }, beta);
    EXPECT_NEAR(b.phi_slope(beta), dphi, 1e-5 * (1.0 + std::abs(dphi)));
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, BarrierKinds,
                         ::testing::Values(BarrierKind::kInverse, BarrierKind::kLog));

TEST(Barrier, InverseClosedForms) {
  const auto b = make_barrier(BarrierKind::kInverse);
  EXPECT_DOUBLE_EQ(b.value(0.5), 2.0);
  // phi(beta) = -beta^2 for B = 1/eta.
  EXPECT_DOUBLE_EQ(b.phi(3.0), -9.0);
}

TEST(Barrier, KindStrings) {
  EXPECT_EQ(barrier_kind_from_string("inverse"), BarrierKind::kInverse);
  EXPECT_EQ(barrier_kind_from_string("log"), BarrierKind::kLog);
  EXPECT_EQ(to_string(BarrierKind::kLog), "log");
  EXPECT_THROW(barrier_kind_from_string("tanh"), ModelError);
  EXPECT_THROW(make_barrier(BarrierKind::kCustom), ModelError);
}

TEST(SafetyConstraint, NumericGradientAndHessianFallback) {
  const SafetyConstraint disk("disk", [](const Vector& x) {
    return (x(0) - 2) * (x(0) - 2) + (x(1) - 2) * (x(1) - 2) - 0.25;
  });
  Vector x(2);
  x << 0.5, -1.0;
  const Vector g = disk.gradient(x);
  EXPECT_NEAR(g(0), 2 * (0.5 - 2), 1e-7);
  EXPECT_NEAR(g(1), 2 * (-1.0 - 2), 1e-7);
  const Matrix h = disk.hessian(x);
  EXPECT_NEAR(h(0, 0), 2.0, 1e-4);
  EXPECT_NEAR(h(0, 1), 0.0, 1e-4);
  EXPECT_TRUE(disk.is_safe(x));
  EXPECT_FALSE(disk.is_safe(Vector::Constant(2, 2.0)));
}

TEST(ControlSystem, RejectsNonEquilibrium) {
  const ControlSystem::Field f = [](const Vector& x, const Vector& u, const Vector&) {
    return Vector(-x + u);
  };
  EXPECT_NO_THROW(ControlSystem("ok", 1, 1, f));
  EXPECT_THROW(ControlSystem("bad", 1, 1, f, {Vector::Ones(1), Vector::Zero(1)}),
               ModelError);
  EXPECT_NO_THROW(ControlSystem("shifted", 1, 1, f, {Vector::Ones(1), Vector::Ones(1)}));
}

TEST(ControlSystem, FallsBackToFiniteDifferenceJacobians) {
  const ControlSystem sys("quad", 1, 1, [](const Vector& x, const Vector& u, const Vector&) {
    return Vector(-x + x.cwiseProduct(x).cwiseProduct(u));
  });
  EXPECT_FALSE(sys.has_analytic_jacobians());
  const auto j = sys.jacobians(Vector::Constant(1, 0.5), Vector::Constant(1, 2.0));
  EXPECT_NEAR(j.dx(0, 0), -1 + 2 * 0.5 * 2.0, 1e-8);
  EXPECT_NEAR(j.du(0, 0), 0.25, 1e-8);
}

TEST(LinearFeedback, SignConventions) {
  Matrix k(1, 2);
  k << 2.0, -1.0;
  Vector x(2);
  x << 1.0, 3.0;
  const LinearFeedback neg(k, FeedbackSign::kNegative);
  const LinearFeedback pos(k, FeedbackSign::kPositive);
  EXPECT_DOUBLE_EQ(neg(x)(0), 1.0);
  EXPECT_DOUBLE_EQ(pos(x)(0), -1.0);
  EXPECT_TRUE(pos.negative_gain().isApprox(-k));

  Vector ref(2);
  ref << 1.0, 1.0;
  const LinearFeedback offset(k, FeedbackSign::kNegative, ref, Vector::Constant(1, 5.0));
  EXPECT_DOUBLE_EQ(offset(x)(0), 5.0 + 2.0);
}

TEST(Disturbance, DeterministicPerSeedAndStep) {
  const auto sig = DisturbanceSignal::uniform(2, 1.0, 42);
  for (long step : {0L, 1L, 999L, 123456L}) {
    EXPECT_TRUE(disturbance_sample(sig, step, 1e-3)
                    .isApprox(disturbance_sample(sig, step, 1e-3), 0.0));
  }
  EXPECT_NE(disturbance_sample(sig, 5, 1e-3)(0),
            disturbance_sample(sig.with_seed(43), 5, 1e-3)(0));
  // Channels draw independent values.
  EXPECT_NE(disturbance_sample(sig, 5, 1e-3)(0), disturbance_sample(sig, 5, 1e-3)(1));
}

TEST(Disturbance, UniformSamplesRespectBoundAndSpreadOut) {
  const double bound = 9.585;
  const auto sig = DisturbanceSignal::uniform(1, bound, 3);
  double lo = 0.0, hi = 0.0, sum = 0.0;
  const long count = 100000;
  for (long k = 0; k < count; ++k) {
    const double d = disturbance_sample(sig, k, 1e-3)(0);
    ASSERT_LE(std::abs(d), bound);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    sum += d;
  }
  EXPECT_LT(lo, -0.99 * bound);
  EXPECT_GT(hi, 0.99 * bound);
  // Mean of U(-b, b) over 1e5 draws: standard error b / sqrt(3e5) ~ 0.0175.
  EXPECT_LT(std::abs(sum / count), 0.1);
}

TEST(Disturbance, DecreasingEnvelope) {
  const auto sig = DisturbanceSignal::decreasing(1, 2.0, 0.5, 9);
  for (long k = 0; k < 20000; k += 37) {
    const double t = k * 1e-3;
    EXPECT_LE(std::abs(disturbance_sample(sig, k, 1e-3)(0)),
              2.0 * std::exp(-0.5 * t) + 1e-15);
  }
}

TEST(Disturbance, ChannelMaskAndGeneratorSupNorm) {
  auto sig = DisturbanceSignal::uniform(3, 1.0, 1);
  sig.channels = {1};
  DisturbanceGenerator gen(sig, 1e-3);
  double seen = 0.0;
  for (long k = 0; k < 500; ++k) {
    const Vector d = gen.sample(k);
    EXPECT_EQ(d(0), 0.0);
    EXPECT_EQ(d(2), 0.0);
    seen = std::max(seen, std::abs(d(1)));
  }
  EXPECT_DOUBLE_EQ(gen.sup_norm(), seen);
}

TEST(Disturbance, KindStrings) {
  EXPECT_EQ(disturbance_kind_from_string("uniform_bounded"),
            DisturbanceKind::kUniformBounded);
  EXPECT_EQ(to_string(DisturbanceKind::kUniformDecreasingEnvelope),
            "uniform_decreasing_envelope");
  EXPECT_THROW(disturbance_kind_from_string("gaussian"), ModelError);
}

}  // namespace
}  // namespace safe_embed
