#include "safe_embed/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace safe_embed::numkit {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x"
       << m.cols();
    throw DimensionError(os.str());
  }
}

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) {
    throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

double norm_inf(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

Spectrum eigenvalues(const Matrix& m) {
  require_square(m, "eigenvalues");
  require_finite(m, "eigenvalues");
  const auto n = m.rows();
  if (n > kMaxDenseDimension) {
    throw DimensionError("eigenvalues: dimension exceeds 32");
  }
  if (n == 0) return {};
  Eigen::EigenSolver<Matrix> solver;
  solver.setMaxIterations(100 * static_cast<Eigen::Index>(n));
  solver.compute(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigenvalues: QR iteration did not converge");
  }
  const auto& ev = solver.eigenvalues();
  return Spectrum(ev.data(), ev.data() + ev.size());
}

double spectral_abscissa(const Matrix& m) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& l : eigenvalues(m)) best = std::max(best, l.real());
  return best;
}

bool is_hurwitz(const Matrix& m, double margin) {
  return m.rows() == 0 || spectral_abscissa(m) < -margin;
}

Spectrum sorted(Spectrum s) {
  std::sort(s.begin(), s.end(), [](const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return s;
}

double spectrum_distance(const Spectrum& a, const Spectrum& b) {
  if (a.size() != b.size()) {
    throw DimensionError("spectrum_distance: size mismatch");
  }
  // Pair the globally closest unused eigenvalues first.
  const std::size_t n = a.size();
  std::vector<bool> used_a(n, false), used_b(n, false);
  double worst = 0.0;
  for (std::size_t round = 0; round < n; ++round) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used_a[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (used_b[j]) continue;
        const double d = std::abs(a[i] - b[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    used_a[bi] = used_b[bj] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

double rcond(const Matrix& a) {
  if (a.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  const double largest = s(0);
  if (largest == 0.0) return 0.0;
  return s(s.size() - 1) / largest;
}

Matrix solve_linear(const Matrix& a, const Matrix& b) {
  require_square(a, "solve_linear");
  if (b.rows() != a.rows()) {
    throw DimensionError("solve_linear: right-hand side row count mismatch");
  }
  require_finite(a, "solve_linear");
  require_finite(b, "solve_linear");
  if (rcond(a) < 1e-12) {
    throw NumericalError("solve_linear: matrix is singular or ill-conditioned");
  }
  Eigen::FullPivLU<Matrix> lu(a);
  Matrix x = lu.solve(b);
  // One refinement sweep keeps the residual at roundoff level.
  x += lu.solve(b - a * x);
  return x;
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  require_square(a, "solve_lyapunov");
  require_square(q, "solve_lyapunov");
  if (q.rows() != a.rows()) {
    throw DimensionError("solve_lyapunov: A and Q differ in size");
  }
  require_finite(a, "solve_lyapunov");
  require_finite(q, "solve_lyapunov");
  const auto n = a.rows();
  if (n == 0) return Matrix(0, 0);

  Eigen::ComplexSchur<Matrix> schur(a);
  if (schur.info() != Eigen::Success) {
    throw NumericalError("solve_lyapunov: Schur decomposition failed");
  }
  const Eigen::MatrixXcd& t = schur.matrixT();
  const Eigen::MatrixXcd& u = schur.matrixU();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(t(i, i).real() < 0.0)) {
      throw NumericalError("solve_lyapunov: A is not Hurwitz");
    }
  }

  // With A = U T U^H the equation becomes T^H Y + Y T = -U^H Q U, solved
  // column by column against the lower-triangular T^H.
  const Eigen::MatrixXcd c = u.adjoint() * q.cast<Complex>() * u;
  const Eigen::MatrixXcd th = t.adjoint();
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXcd rhs = -c.col(j);
    for (Eigen::Index k = 0; k < j; ++k) rhs -= t(k, j) * y.col(k);
    Eigen::MatrixXcd lhs = th;
    lhs.diagonal().array() += t(j, j);
    y.col(j) = lhs.triangularView<Eigen::Lower>().solve(rhs);
  }
  Matrix p = (u * y * u.adjoint()).real();
  return 0.5 * (p + p.transpose());
}

std::vector<double> monic_polynomial(const Spectrum& poles) {
  // Coefficients in ascending order; coeffs[n] = 1.
  std::vector<Complex> coeffs{Complex(1.0, 0.0)};
  for (const auto& p : poles) {
    std::vector<Complex> next(coeffs.size() + 1, Complex(0.0, 0.0));
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      next[i + 1] += coeffs[i];
      next[i] -= p * coeffs[i];
    }
    coeffs = std::move(next);
  }
  std::vector<double> out(poles.size());
  double scale = 1.0;
  for (const auto& c : coeffs) scale = std::max(scale, std::abs(c));
  for (std::size_t i = 0; i < poles.size(); ++i) {
    if (std::abs(coeffs[i].imag()) > 1e-9 * scale) {
      throw DimensionError(
          "monic_polynomial: pole list is not closed under conjugation");
    }
    out[i] = coeffs[i].real();
  }
  return out;
}

Matrix controllability_matrix(const Matrix& a, const Matrix& b) {
  const auto n = a.rows();
  const auto m = b.cols();
  Matrix c(n, n * m);
  Matrix block = b;
  for (Eigen::Index k = 0; k < n; ++k) {
    c.middleCols(k * m, m) = block;
    block = a * block;
  }
  return c;
}

RowVector ackermann_gain(const Matrix& a, const Matrix& b,
                         const Spectrum& poles) {
  require_square(a, "ackermann_gain");
  const auto n = a.rows();
  if (b.rows() != n || b.cols() != 1) {
    throw DimensionError("ackermann_gain: B must be n x 1");
  }
  if (static_cast<Eigen::Index>(poles.size()) != n) {
    throw DimensionError("ackermann_gain: need exactly n poles");
  }
  const auto coeffs = monic_polynomial(poles);
  // Horner: p(A) = (((A + c_{n-1}) A + c_{n-2}) A + ...) + c_0 I.
  Matrix pa = Matrix::Identity(n, n);
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    pa = a * pa + coeffs[static_cast<std::size_t>(k)] * Matrix::Identity(n, n);
  }
  const Matrix ctrb = controllability_matrix(a, b);
  Vector last = Vector::Zero(n);
  last(n - 1) = 1.0;
  // K = e_n^T C^{-1} p(A)  <=>  C^T w = e_n, K = w^T p(A).
  const Vector w = ctrb.transpose().fullPivLu().solve(last);
  return w.transpose() * pa;
}

namespace {

// Eigenvalues within this distance of the imaginary axis count as marginal.
double seed_margin(const Matrix& a) { return 1e-9 * (1.0 + norm_inf(a)); }

// Bass: with sigma > max |Re(lambda)|, W solving
// (A + sI) W + W (A + sI)^T = 2 B B^T is positive definite for a
// controllable pair and K = B^T W^-1 places every mode at Re = -s.
std::optional<Matrix> bass_gain(const Matrix& a, const Matrix& b) {
  double bound = 0.0;
  for (const auto& l : eigenvalues(a)) bound = std::max(bound, std::abs(l.real()));
  const Matrix shifted = a + (1.0 + bound) * Matrix::Identity(a.rows(), a.rows());
  try {
    const Matrix w = solve_lyapunov(-shifted.transpose(), 2.0 * b * b.transpose());
    const Matrix k = solve_linear(w, b).transpose();
    if (is_hurwitz(a - b * k, seed_margin(a))) return k;
  } catch (const NumericalError&) {
  }
  return std::nullopt;
}

}  // namespace

Matrix stabilizing_gain(const Matrix& a, const Matrix& b) {
  const auto n = a.rows();
  const auto m = b.cols();
  const auto spectrum = eigenvalues(a);
  if (is_hurwitz(a, seed_margin(a))) return Matrix::Zero(m, n);

  if (m == 1 && rcond(controllability_matrix(a, b)) > 1e-12) {
    // Reflect unstable modes into the left half plane.
    Spectrum target;
    for (const auto& l : spectrum) {
      target.emplace_back(-std::max(std::abs(l.real()), 1.0), l.imag());
    }
    const Matrix k = ackermann_gain(a, b, target);
    if (is_hurwitz(a - b * k, seed_margin(a))) return k;
  }

  if (auto k = bass_gain(a, b)) return *k;

  // Uncontrollable modes cannot move: Bass on the controllable subspace,
  // provided the remaining block is already stable.
  const Eigen::JacobiSVD<Matrix> svd(controllability_matrix(a, b), Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  Eigen::Index r = 0;
  while (r < sv.size() && sv(r) > 1e-10 * sv(0)) ++r;
  if (r > 0 && r < n) {
    const Matrix basis = svd.matrixU().leftCols(r);
    const Matrix complement = svd.matrixU().rightCols(n - r);
    if (!is_hurwitz(complement.transpose() * a * complement, seed_margin(a))) {
      throw NumericalError("stabilizing_gain: (A, B) is not stabilizable");
    }
    if (auto kc = bass_gain(basis.transpose() * a * basis, basis.transpose() * b)) {
      const Matrix k = *kc * basis.transpose();
      if (is_hurwitz(a - b * k, seed_margin(a))) return k;
    }
  }
  throw NumericalError(
      "stabilizing_gain: could not construct a stabilizing initial gain");
}

Matrix care_residual(const Matrix& a, const Matrix& b, const Matrix& q,
                     const Matrix& r, const Matrix& p) {
  const Matrix rinv_bt = r.llt().solve(b.transpose());
  return a.transpose() * p + p * a - p * b * rinv_bt * p + q;
}

Matrix solve_care(const Matrix& a, const Matrix& b, const Matrix& q,
                  const Matrix& r, const CareOptions& options) {
  require_square(a, "solve_care");
  require_square(q, "solve_care");
  require_square(r, "solve_care");
  const auto n = a.rows();
  const auto m = b.cols();
  if (b.rows() != n || q.rows() != n || r.rows() != m) {
    throw DimensionError("solve_care: inconsistent dimensions");
  }
  require_finite(a, "solve_care");
  require_finite(b, "solve_care");
  require_finite(q, "solve_care");
  require_finite(r, "solve_care");
  if ((r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + norm_inf(r))) {
    throw NumericalError("solve_care: R is not symmetric");
  }
  Eigen::LLT<Matrix> r_llt(r);
  if (r_llt.info() != Eigen::Success) {
    throw NumericalError("solve_care: R is not positive definite");
  }
  const Matrix q_sym = 0.5 * (q + q.transpose());

  Matrix k = stabilizing_gain(a, b);
  Matrix p = Matrix::Zero(n, n);
  bool converged = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Matrix closed = a - b * k;
    const Matrix next =
        solve_lyapunov(closed, q_sym + k.transpose() * r * k);
    const double change = norm_inf(next - p);
    p = next;
    k = r_llt.solve(b.transpose() * p);
    if (iter > 0 && change <= options.tolerance * (1.0 + norm_inf(p))) {
      converged = true;
      break;
    }
  }
  const double residual = norm_inf(care_residual(a, b, q_sym, r, p));
  if (!converged && residual > 1e-7 * (1.0 + norm_inf(q))) {
    throw NumericalError("solve_care: Newton-Kleinman did not converge");
  }
  if (residual > 1e-7 * (1.0 + norm_inf(q))) {
    std::ostringstream os;
    os << "solve_care: Riccati residual " << residual << " above tolerance";
    throw NumericalError(os.str());
  }
  return p;
}

double default_fd_step(double v) {
  static const double kCbrtEps =
      std::cbrt(std::numeric_limits<double>::epsilon());
  return kCbrtEps * (1.0 + std::abs(v));
}

Jacobians jacobian_fd(const PlantField& f, const Vector& x0, const Vector& u0,
                      std::optional<double> step) {
  if (step && !(*step > 0.0)) {
    throw DimensionError("jacobian_fd: step must be positive");
  }
  const auto n = x0.size();
  const auto m = u0.size();

  auto eval = [&](const Vector& x, const Vector& u, Eigen::Index coord,
                  bool input_side) -> Vector {
    Vector out;
    try {
      out = f(x, u);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "jacobian_fd: evaluation failed while perturbing "
         << (input_side ? "u" : "x") << "[" << coord << "]: " << e.what();
      throw StencilError(os.str(), static_cast<int>(coord), input_side);
    }
    if (!out.allFinite()) {
      std::ostringstream os;
      os << "jacobian_fd: non-finite value while perturbing "
         << (input_side ? "u" : "x") << "[" << coord << "]";
      throw StencilError(os.str(), static_cast<int>(coord), input_side);
    }
    return out;
  };

  const Vector f0 = f(x0, u0);
  Jacobians j{Matrix(f0.size(), n), Matrix(f0.size(), m)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = step ? *step : default_fd_step(x0(i));
    Vector xp = x0, xm = x0;
    xp(i) += h;
    xm(i) -= h;
    j.dx.col(i) = (eval(xp, u0, i, false) - eval(xm, u0, i, false)) /
                  (xp(i) - xm(i));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const double h = step ? *step : default_fd_step(u0(i));
    Vector up = u0, um = u0;
    up(i) += h;
    um(i) -= h;
    j.du.col(i) =
        (eval(x0, up, i, true) - eval(x0, um, i, true)) / (up(i) - um(i));
  }
  return j;
}

Vector rk4_step(const TimeField& f, double t, const Vector& x, double dt) {
  const Vector k1 = f(t, x);
  const Vector k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1);
  const Vector k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2);
  const Vector k4 = f(t + dt, x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

OdeTrack rk4_integrate(const TimeField& f, const Vector& x0,
                       std::pair<double, double> t_span, double dt) {
  if (!(dt > 0.0)) throw DimensionError("rk4_integrate: dt must be positive");
  const auto [t0, t1] = t_span;
  if (t1 < t0) throw DimensionError("rk4_integrate: reversed time span");

  OdeTrack track;
  track.t.push_back(t0);
  track.x.push_back(x0);
  if (!x0.allFinite()) {
    track.diverged = true;
    return track;
  }
  // Grid points are t0 + k dt; the final step is truncated to hit t1.
  const double span = t1 - t0;
  const auto full_steps = static_cast<long>(std::floor(span / dt + 1e-9));
  Vector x = x0;
  for (long k = 1; k <= full_steps + 1; ++k) {
    const double t_prev = t0 + static_cast<double>(k - 1) * dt;
    double t_next = t0 + static_cast<double>(k) * dt;
    if (k == full_steps + 1) {
      if (t1 - t_prev <= 1e-12 * std::max(1.0, std::abs(t1))) break;
      t_next = t1;
    }
    x = rk4_step(f, t_prev, x, t_next - t_prev);
    track.t.push_back(t_next);
    track.x.push_back(x);
    if (!x.allFinite()) {
      track.diverged = true;
      break;
    }
  }
  return track;
}

}  // namespace safe_embed::numkit
