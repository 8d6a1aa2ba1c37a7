#pragma once

// Barrier states and safety-embedded systems.
//
// For a constraint h(x) > 0 with barrier B, the barrier state z evolves as
//
//   z' = phi(z + beta0) <grad h(x), f(x, u)> - gamma (z + beta0 - B(h(x)))
//
// where phi = B' o B^-1 and beta0 = B(h(x_eq)). Started from
// z(0) = B(h(x(0))) - beta0 it reproduces the shifted barrier exactly, and
// the mismatch decays at rate ~gamma otherwise. The embedded system stacks
// the plant and every barrier state: xbar = [x; z_1; ...; z_nb].

#include <vector>

#include "safe_embed/model.hpp"

namespace safe_embed {

/// Which factor multiplies the Lie derivative in the barrier-state ODE.
enum class BarrierSlope {
  kFromState,       // phi(z + beta0): the standard barrier state
  kFromConstraint,  // B'(h(x)): used for input-constraint barrier states
};

struct BarrierStateSpec {
  SafetyConstraint constraint;
  BarrierFunction barrier;
  double gamma = 1.0;
  double beta0 = 0.0;
  BarrierSlope slope = BarrierSlope::kFromState;
};

/// Constraint, barrier and gain for one barrier state, before beta0 is
/// fixed by an equilibrium.
struct BarrierRequest {
  SafetyConstraint constraint;
  BarrierFunction barrier = make_barrier(BarrierKind::kInverse);
  double gamma = 1.0;
};

/// Fixes beta0 = B(h(x_eq)). Throws ModelError if gamma <= 0 or the
/// equilibrium is not strictly safe.
BarrierStateSpec make_bas_spec(const BarrierRequest& request,
                               const Vector& x_eq,
                               BarrierSlope slope = BarrierSlope::kFromState);

/// z' for one barrier state. `xdot` = f(x, u) is passed in so the plant is
/// evaluated once per embedded-field call. Throws SafetyBreach if h(x) <= 0.
double bas_rhs(const BarrierStateSpec& spec, const Vector& x, double z,
               const Vector& xdot, int index = 0);

/// Single constraint 1/H = sum 1/h_i. Evaluation throws SafetyBreach if any
/// h_i <= 0; the gradient is composed by the chain rule.
SafetyConstraint aggregate_constraints(std::vector<SafetyConstraint> parts,
                                       std::string label = "aggregate");

/// Shifted barrier value B(h(x0)) - beta0, the initial barrier state that
/// keeps z on the barrier for all time.
double consistent_z0(const BarrierStateSpec& spec, const Vector& x0);

class EmbeddedSystem {
 public:
  /// Throws ModelError if fbar(equilibrium) != 0 within 1e-9.
  EmbeddedSystem(ControlSystem base, std::vector<BarrierStateSpec> specs);

  const ControlSystem& base() const { return base_; }
  const std::vector<BarrierStateSpec>& specs() const { return specs_; }

  int n() const { return base_.n(); }
  int m() const { return base_.m(); }
  int barrier_count() const { return static_cast<int>(specs_.size()); }
  int dim() const { return n() + barrier_count(); }

  /// [x_eq; 0] and u_eq.
  Vector equilibrium_state() const;
  const Vector& equilibrium_input() const { return base_.equilibrium().u; }

  /// fbar(xbar, u, w). Throws SafetyBreach when some h_i(x) <= 0.
  Vector operator()(const Vector& xbar, const Vector& u) const;
  Vector operator()(const Vector& xbar, const Vector& u, const Vector& w) const;

  /// h_i(x) for every barrier state, computed from the plant part.
  Vector margins(const Vector& xbar) const;

  /// [x0; consistent z0 for each barrier state].
  Vector consistent_state(const Vector& x0) const;

  /// B_i(h_i(x)) - beta0_i for each barrier state (the ideal z).
  Vector shifted_barriers(const Vector& x) const;

 private:
  ControlSystem base_;
  std::vector<BarrierStateSpec> specs_;
};

/// Embeds state-constraint barrier states in declaration order.
EmbeddedSystem embed(const ControlSystem& system,
                     const std::vector<BarrierRequest>& requests);

/// Input-constraint embedding. The new plant state is (x, u) driven by
/// v = u'; each g_j(u) > 0 gets a barrier state
///   z^u' = B'(g_j(u)) <grad g_j, v> - gamma_j (z^u + beta^u_j - B(g_j(u)))
/// with beta^u_j at the equilibrium input. State constraints h(x) are then
/// appended, giving the order (x, u, z^u..., z^x...).
EmbeddedSystem input_embed(const ControlSystem& system,
                           const std::vector<BarrierRequest>& input_constraints,
                           const std::vector<BarrierRequest>& state_constraints);

/// Lifts a constraint on a sub-vector [offset, offset + size) of a larger
/// state to the full state (gradient and Hessian zero-padded).
SafetyConstraint lift_constraint(const SafetyConstraint& c, int offset,
                                 int size, int full_dim);

}  // namespace safe_embed
