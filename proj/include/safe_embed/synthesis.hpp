#pragma once

#include <string>
#include <vector>

#include "safe_embed/linearize.hpp"

namespace safe_embed {

/// Synthesis failure (uncontrollable pair, Riccati breakdown, ...).
class SynthesisError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

namespace synthesis {

struct PolePlacement {
  RowVector gain;  // u = -K x
  double controllability_rcond = 0.0;
  /// Set when the controllability matrix is ill-conditioned (cond > 1e10)
  /// or when uncontrollable modes were matched to requested poles.
  std::vector<std::string> warnings;
};

/// Single-input Ackermann placement. Throws SynthesisError when m != 1,
/// when the pole list is not conjugate-closed or has the wrong length, or
/// when (A, B) is uncontrollable and some uncontrollable mode is missing
/// from the requested poles. Otherwise the requested poles left after
/// removing the uncontrollable modes are placed on the controllable part.
PolePlacement ackermann(const Matrix& a, const Matrix& b, const Spectrum& poles);

struct LqrResult {
  Matrix gain;  // K = R^-1 B^T P, u = -K x
  Matrix cost;  // P
};

LqrResult lqr(const Matrix& a, const Matrix& b, const Matrix& q,
              const Matrix& r);

/// eig(A - B K) for u = -K xbar, eig(A + B K) for u = +K xbar.
Spectrum closed_loop_spectrum(const LinearizedSystem& lin,
                              const LinearFeedback& feedback);

/// PID-plus-barrier gains and the embedded coordinates they act on.
struct PidbGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double kb = 0.0;
  int p_index = 0;
  int i_index = 0;
  int d_index = 0;
  int b_index = 0;
};

/// Sparse gain row for u = -(kp x_p + ki x_i + kd x_d + kb x_b). Throws
/// SynthesisError if two terms share an index or an index is outside
/// [0, state_dim).
LinearFeedback assemble_pidb(const PidbGains& gains, int state_dim,
                             Vector state_ref = {});

}  // namespace synthesis
}  // namespace safe_embed
