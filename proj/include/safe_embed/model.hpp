#pragma once

// Declarative descriptions of plants, safety constraints, barrier
// operators, linear feedback laws and disturbance signals.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "safe_embed/numkit.hpp"

namespace safe_embed {

/// Malformed model description (bad dimensions, equilibrium that is not an
/// equilibrium, unsupported barrier kind, ...).
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A safety function was evaluated at or outside the boundary of its safe
/// set, where the barrier is singular.
class SafetyBreach : public std::runtime_error {
 public:
  SafetyBreach(const std::string& what, int constraint, double margin)
      : std::runtime_error(what), constraint_(constraint), margin_(margin) {}
  int constraint() const { return constraint_; }
  double margin() const { return margin_; }

 private:
  int constraint_;
  double margin_;
};

/// State/input pair the system is regulated to.
struct OperatingPoint {
  Vector x;
  Vector u;
};

/// x' = f(x, u, w). `w` is an optional exogenous signal (e.g. a leader
/// vehicle's acceleration) that feedback does not drive; it is zero unless a
/// simulation supplies it.
class ControlSystem {
 public:
  using Field =
      std::function<Vector(const Vector& x, const Vector& u, const Vector& w)>;
  using JacobianFn =
      std::function<numkit::Jacobians(const Vector& x, const Vector& u)>;

  /// Throws ModelError if f(equilibrium) differs from zero by more than
  /// 1e-9 or if dimensions disagree. An empty equilibrium means the origin.
  ControlSystem(std::string name, int n, int m, Field f,
                OperatingPoint equilibrium = {}, int exogenous_dim = 0,
                std::optional<JacobianFn> jacobians = std::nullopt);

  const std::string& name() const { return name_; }
  int n() const { return n_; }
  int m() const { return m_; }
  int exogenous_dim() const { return exogenous_dim_; }
  const OperatingPoint& equilibrium() const { return equilibrium_; }

  Vector operator()(const Vector& x, const Vector& u) const;
  Vector operator()(const Vector& x, const Vector& u, const Vector& w) const;

  /// Analytic Jacobians when supplied, otherwise central differences.
  numkit::Jacobians jacobians(const Vector& x, const Vector& u) const;
  bool has_analytic_jacobians() const { return jacobians_.has_value(); }

 private:
  std::string name_;
  int n_;
  int m_;
  int exogenous_dim_;
  Field f_;
  OperatingPoint equilibrium_;
  std::optional<JacobianFn> jacobians_;
};

/// Safe set {x : h(x) > 0}.
class SafetyConstraint {
 public:
  using Scalar = std::function<double(const Vector& x)>;
  using Gradient = std::function<Vector(const Vector& x)>;
  using Hessian = std::function<Matrix(const Vector& x)>;

  SafetyConstraint(std::string label, Scalar h,
                   std::optional<Gradient> grad = std::nullopt,
                   std::optional<Hessian> hessian = std::nullopt);

  const std::string& label() const { return label_; }
  double value(const Vector& x) const { return h_(x); }
  bool is_safe(const Vector& x) const { return h_(x) > 0.0; }

  /// Analytic gradient if supplied, else central differences.
  Vector gradient(const Vector& x) const;
  /// Analytic Hessian if supplied, else central differences of gradient().
  Matrix hessian(const Vector& x) const;
  bool has_analytic_gradient() const { return grad_.has_value(); }

 private:
  std::string label_;
  Scalar h_;
  std::optional<Gradient> grad_;
  std::optional<Hessian> hessian_;
};

enum class BarrierKind { kInverse, kLog, kCustom };

std::string to_string(BarrierKind kind);
BarrierKind barrier_kind_from_string(const std::string& s);

/// Scalar barrier B on (0, inf) with B -> inf at 0+, plus the derived maps
/// the barrier-state dynamics need: B', B'', phi = B' o B^-1 and phi'.
class BarrierFunction {
 public:
  struct Ops {
    std::function<double(double)> value;         // B(eta)
    std::function<double(double)> slope;         // B'(eta)
    std::function<double(double)> curvature;     // B''(eta)
    std::function<double(double)> inverse;       // B^-1(beta)
    std::function<double(double)> phi;           // B'(B^-1(beta))
    std::function<double(double)> phi_slope;     // d phi / d beta
  };

  /// Custom barrier from user-supplied maps; every entry must be set.
  static BarrierFunction custom(Ops ops);

  BarrierKind kind() const { return kind_; }

  /// B(eta); throws ModelError for eta <= 0.
  double value(double eta) const;
  double slope(double eta) const;
  double curvature(double eta) const;
  double inverse(double beta) const { return ops_.inverse(beta); }
  double phi(double beta) const { return ops_.phi(beta); }
  double phi_slope(double beta) const { return ops_.phi_slope(beta); }

 private:
  friend BarrierFunction make_barrier(BarrierKind kind);
  BarrierFunction(BarrierKind kind, Ops ops)
      : kind_(kind), ops_(std::move(ops)) {}

  BarrierKind kind_;
  Ops ops_;
};

/// inverse: B = 1/eta.  log: B = log((1 + eta) / eta).
/// Throws ModelError for kCustom (use BarrierFunction::custom).
BarrierFunction make_barrier(BarrierKind kind);

enum class FeedbackSign {
  kNegative,  // u = u_ref - K (xbar - xbar_ref)
  kPositive,  // u = u_ref + K (xbar - xbar_ref)
};

/// Linear state feedback over the embedded state. The sign convention is
/// explicit because published gains use both forms.
struct LinearFeedback {
  Matrix gain;  // m x nbar
  FeedbackSign sign = FeedbackSign::kNegative;
  Vector state_ref;  // empty = origin
  Vector input_ref;  // empty = zero

  LinearFeedback() = default;
  LinearFeedback(Matrix k, FeedbackSign s, Vector x_ref = {}, Vector u_ref = {});

  int inputs() const { return static_cast<int>(gain.rows()); }
  int states() const { return static_cast<int>(gain.cols()); }

  Vector operator()(const Vector& xbar) const;

  /// Gain in the u = -K xbar convention.
  Matrix negative_gain() const {
    return sign == FeedbackSign::kNegative ? gain : Matrix(-gain);
  }
};

enum class DisturbanceKind {
  kZero,
  kUniformBounded,              // d ~ U(-bound, bound)
  kUniformDecreasingEnvelope,   // d ~ bound * exp(-decay t) * U(-1, 1)
  kSamples,                     // replay of a fixed sample table
};

std::string to_string(DisturbanceKind kind);
DisturbanceKind disturbance_kind_from_string(const std::string& s);

/// Description of a bounded input disturbance; cheap to copy. Samples are
/// drawn per integration step and held constant across it.
struct DisturbanceSignal {
  DisturbanceKind kind = DisturbanceKind::kZero;
  int dim = 1;
  double bound = 0.0;
  std::uint64_t seed = 0;
  double decay_rate = 0.0;
  /// Which input channels are disturbed (empty = all).
  std::vector<int> channels;
  /// kSamples only: row k is the sample for step k (clamped to the last row).
  Matrix samples;

  static DisturbanceSignal zero(int dim);
  static DisturbanceSignal uniform(int dim, double bound, std::uint64_t seed);
  static DisturbanceSignal decreasing(int dim, double bound, double decay_rate,
                                      std::uint64_t seed);

  DisturbanceSignal with_seed(std::uint64_t s) const {
    auto copy = *this;
    copy.seed = s;
    return copy;
  }
};

/// Sample for integration step `step` (held over [step dt, (step+1) dt)).
/// Counter-based: the value depends only on (seed, step, channel), so equal
/// seeds give bit-identical streams and any step can be drawn directly.
Vector disturbance_sample(const DisturbanceSignal& signal, long step, double dt);

/// Per-trajectory view of a signal that tracks the running sup-norm of
/// the samples it has handed out.
class DisturbanceGenerator {
 public:
  DisturbanceGenerator(DisturbanceSignal signal, double dt)
      : signal_(std::move(signal)), dt_(dt) {}

  Vector sample(long step);
  double sup_norm() const { return sup_norm_; }

 private:
  DisturbanceSignal signal_;
  double dt_;
  double sup_norm_ = 0.0;
};

}  // namespace safe_embed
