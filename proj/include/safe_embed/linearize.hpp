#pragma once

#include "safe_embed/embedding.hpp"

namespace safe_embed {

/// xbar' ~ drift + A (xbar - xbar*) + B (u - u*).
struct LinearizedSystem {
  Matrix a;
  Matrix b;
  Vector state;  // xbar*
  Vector input;  // u*
  Vector drift;  // fbar(xbar*, u*); zero at an equilibrium

  bool at_equilibrium(double tol = 1e-9) const {
    return drift.size() == 0 || drift.cwiseAbs().maxCoeff() <= tol;
  }
};

/// Exact Jacobian of the embedded field. Plant blocks come from the plant's
/// analytic Jacobians when supplied (else central differences); barrier
/// rows follow from the chain rule. With zeta = z_i + beta0 and
/// L = <grad h, f>:
///
///   dz_i'/dx   = phi(zeta) (Hess h f + J_x^T grad h)^T + gamma B'(h) grad h^T
///   dz_i'/dz_i = phi'(zeta) L - gamma
///   dz_i'/du   = phi(zeta) grad h^T J_u
///
/// (input-constraint rows use B'(h) in place of phi and pick up a B''(h) L
/// term instead of phi'). Operating points need not be equilibria; `drift`
/// reports fbar there. Throws SafetyBreach if the point is unsafe.
LinearizedSystem linearize_embedded(const EmbeddedSystem& sys,
                                    const Vector& state, const Vector& input);

/// Linearization about the embedded equilibrium.
LinearizedSystem linearize_embedded(const EmbeddedSystem& sys);

/// Central-difference Jacobian of the embedded field, for cross-checks.
LinearizedSystem linearize_fd(const EmbeddedSystem& sys, const Vector& state,
                              const Vector& input);

/// Largest elementwise |a - b| / (1 + |b|) over both matrices.
double linearization_mismatch(const LinearizedSystem& a,
                              const LinearizedSystem& b);

}  // namespace safe_embed
