#pragma once

// Small dense numerical kernels shared by every other module: spectra,
// linear / Lyapunov / Riccati solves, finite-difference Jacobians and
// fixed-step RK4 integration. Everything here is a pure function of its
// arguments.

#include <complex>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace safe_embed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Complex = std::complex<double>;

/// Eigenvalues of a real square matrix, conjugate pairs adjacent.
using Spectrum = std::vector<Complex>;

/// Raised when a numerical kernel cannot honor its contract (singular
/// system, non-Hurwitz input, iteration cap reached, non-finite data).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed arguments (dimension mismatch, non-square input).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace numkit {

inline constexpr int kMaxDenseDimension = 32;

bool all_finite(const Matrix& m);

/// Infinity norm of a matrix (max absolute row sum).
double norm_inf(const Matrix& m);

/// All eigenvalues of `m` (at most 32x32). Throws DimensionError for
/// non-square input and NumericalError for non-finite entries or when the
/// QR iteration fails to converge.
Spectrum eigenvalues(const Matrix& m);

/// Largest real part of the spectrum.
double spectral_abscissa(const Matrix& m);

bool is_hurwitz(const Matrix& m, double margin = 0.0);

/// Sorts by real part, then imaginary part.
Spectrum sorted(Spectrum s);

/// Largest |a_i - b_j| over a pairing built by repeatedly matching the
/// closest unused eigenvalues. Sizes must match.
double spectrum_distance(const Spectrum& a, const Spectrum& b);

/// Reciprocal 2-norm condition number (smallest / largest singular value).
double rcond(const Matrix& a);

/// Solves A x = b for square nonsingular A; b may have several columns.
/// Throws NumericalError when cond(A) exceeds 1e12.
Matrix solve_linear(const Matrix& a, const Matrix& b);

/// Solves A^T P + P A + Q = 0 for Hurwitz A (Bartels-Stewart on the
/// complex Schur form). The result is symmetrized.
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// Coefficients c_0..c_{n-1} of the monic polynomial prod (s - p_i), i.e.
/// s^n + c_{n-1} s^{n-1} + ... + c_0. The pole list must be closed under
/// conjugation.
std::vector<double> monic_polynomial(const Spectrum& poles);

/// Controllability matrix [B, AB, ..., A^{n-1}B].
Matrix controllability_matrix(const Matrix& a, const Matrix& b);

/// Single-input Ackermann gain K such that eig(A - B K) = poles. No
/// conditioning checks; see synthesis::ackermann for the checked version.
RowVector ackermann_gain(const Matrix& a, const Matrix& b,
                         const Spectrum& poles);

/// Some K with A - B K Hurwitz, for seeding Newton-Kleinman. Uses
/// Ackermann for controllable single-input pairs and Bass's shifted
/// Lyapunov construction otherwise, restricted to the controllable
/// subspace when (A, B) is only stabilizable.
Matrix stabilizing_gain(const Matrix& a, const Matrix& b);

struct CareOptions {
  int max_iterations = 100;
  double tolerance = 1e-13;
};

/// Stabilizing solution of A^T P + P A - P B R^-1 B^T P + Q = 0 via
/// Newton-Kleinman. Throws NumericalError if R is not positive definite,
/// if no stabilizing seed can be found, or if the final residual exceeds
/// 1e-7 (1 + |Q|).
Matrix solve_care(const Matrix& a, const Matrix& b, const Matrix& q,
                  const Matrix& r, const CareOptions& options = {});

/// Left-hand side of the Riccati equation, for residual checks.
Matrix care_residual(const Matrix& a, const Matrix& b, const Matrix& q,
                     const Matrix& r, const Matrix& p);

/// Evaluation failure inside a finite-difference stencil.
class StencilError : public NumericalError {
 public:
  StencilError(const std::string& what, int coordinate, bool input_side)
      : NumericalError(what), coordinate_(coordinate), input_side_(input_side) {}
  int coordinate() const { return coordinate_; }
  bool input_side() const { return input_side_; }

 private:
  int coordinate_;
  bool input_side_;
};

using PlantField = std::function<Vector(const Vector& x, const Vector& u)>;

struct Jacobians {
  Matrix dx;  // df/dx
  Matrix du;  // df/du
};

/// Default central-difference step for coordinate value v:
/// cbrt(machine epsilon) * (1 + |v|).
double default_fd_step(double v);

/// Central-difference Jacobians of f at (x0, u0). With `step` unset each
/// coordinate uses default_fd_step. Any exception (or non-finite value)
/// raised while evaluating the stencil is rethrown as StencilError naming
/// the perturbed coordinate.
Jacobians jacobian_fd(const PlantField& f, const Vector& x0, const Vector& u0,
                      std::optional<double> step = std::nullopt);

using TimeField = std::function<Vector(double t, const Vector& x)>;

/// One classical RK4 step.
Vector rk4_step(const TimeField& f, double t, const Vector& x, double dt);

struct OdeTrack {
  std::vector<double> t;
  std::vector<Vector> x;
  bool diverged = false;
};

/// Fixed-step RK4 from t_span.first to t_span.second. The last step is
/// shortened to land exactly on the final time. Stops early (diverged =
/// true) on the first non-finite state.
OdeTrack rk4_integrate(const TimeField& f, const Vector& x0,
                       std::pair<double, double> t_span, double dt);

}  // namespace numkit
}  // namespace safe_embed
