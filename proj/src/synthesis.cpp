#include "safe_embed/synthesis.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace safe_embed::synthesis {

namespace {

// Orthonormal basis of the Krylov space span{b, Ab, A^2 b, ...}.
Matrix controllable_basis(const Matrix& a, const Matrix& b) {
  const Eigen::Index n = a.rows();
  const double tol = 1e-10 * std::max(1.0, a.norm()) * std::max(1.0, b.norm());
  Matrix basis(n, 0);
  Vector v = b.col(0);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis * (basis.transpose() * v);
    }
    const double norm = v.norm();
    if (norm <= tol) break;
    basis.conservativeResize(n, basis.cols() + 1);
    basis.col(basis.cols() - 1) = v / norm;
    v = a * basis.col(basis.cols() - 1);
  }
  return basis;
}

}  // namespace

PolePlacement ackermann(const Matrix& a, const Matrix& b,
                        const Spectrum& poles) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw SynthesisError("ackermann: inconsistent dimensions");
  }
  if (b.cols() != 1) {
    throw SynthesisError("ackermann: single-input systems only");
  }
  if (static_cast<Eigen::Index>(poles.size()) != a.rows()) {
    throw SynthesisError("ackermann: need one pole per state");
  }
  PolePlacement out;
  out.controllability_rcond =
      numkit::rcond(numkit::controllability_matrix(a, b));
  const Matrix basis = controllable_basis(a, b);
  const Eigen::Index n = a.rows();
  const Eigen::Index r = basis.cols();

  if (r == n) {
    if (out.controllability_rcond < 1e-10) {
      std::ostringstream os;
      os << "ackermann: controllability matrix is ill-conditioned (cond = "
         << 1.0 / out.controllability_rcond << "); gain is best effort";
      out.warnings.push_back(os.str());
    }
    try {
      out.gain = numkit::ackermann_gain(a, b, poles);
    } catch (const DimensionError& e) {
      throw SynthesisError(e.what());
    }
    return out;
  }

  // Kalman decomposition: the uncontrollable modes stay where they are, so
  // each of them has to appear in the requested pole list.
  const Matrix q = Eigen::HouseholderQR<Matrix>(basis).householderQ();
  const Matrix complement = q.rightCols(n - r);
  const Spectrum fixed =
      numkit::eigenvalues(complement.transpose() * a * complement);
  Spectrum remaining = poles;
  for (const auto& mode : fixed) {
    auto best = remaining.end();
    double best_dist = 0.0;
    for (auto it = remaining.begin(); it != remaining.end(); ++it) {
      const double d = std::abs(*it - mode);
      if (best == remaining.end() || d < best_dist) {
        best = it;
        best_dist = d;
      }
    }
    if (best == remaining.end() ||
        best_dist > 1e-6 * std::max(1.0, std::abs(mode))) {
      std::ostringstream os;
      os << "ackermann: (A, B) is not controllable and the uncontrollable mode "
         << mode << " is not among the requested poles";
      throw SynthesisError(os.str());
    }
    remaining.erase(best);
  }
  const Matrix a_c = basis.transpose() * a * basis;
  const Matrix b_c = basis.transpose() * b;
  RowVector k_c;
  try {
    k_c = numkit::ackermann_gain(a_c, b_c, remaining);
  } catch (const DimensionError& e) {
    throw SynthesisError(e.what());
  }
  out.gain = k_c * basis.transpose();
  std::ostringstream os;
  os << "ackermann: " << (n - r)
     << " uncontrollable mode(s) already at requested poles; placed the rest";
  out.warnings.push_back(os.str());
  return out;
}

LqrResult lqr(const Matrix& a, const Matrix& b, const Matrix& q,
              const Matrix& r) {
  LqrResult out;
  try {
    out.cost = numkit::solve_care(a, b, q, r);
  } catch (const NumericalError& e) {
    throw SynthesisError(std::string("lqr: ") + e.what());
  } catch (const DimensionError& e) {
    throw SynthesisError(std::string("lqr: ") + e.what());
  }
  out.gain = r.llt().solve(b.transpose() * out.cost);
  if (!numkit::is_hurwitz(a - b * out.gain)) {
    throw SynthesisError("lqr: closed loop is not Hurwitz");
  }
  return out;
}

Spectrum closed_loop_spectrum(const LinearizedSystem& lin,
                              const LinearFeedback& feedback) {
  if (feedback.gain.rows() != lin.b.cols() ||
      feedback.gain.cols() != lin.a.cols()) {
    throw DimensionError("closed_loop_spectrum: gain has the wrong shape");
  }
  return numkit::eigenvalues(lin.a - lin.b * feedback.negative_gain());
}

LinearFeedback assemble_pidb(const PidbGains& gains, int state_dim,
                             Vector state_ref) {
  const int indices[] = {gains.p_index, gains.i_index, gains.d_index,
                         gains.b_index};
  const double values[] = {gains.kp, gains.ki, gains.kd, gains.kb};
  std::set<int> seen;
  Matrix k = Matrix::Zero(1, state_dim);
  for (int j = 0; j < 4; ++j) {
    if (indices[j] < 0 || indices[j] >= state_dim) {
      throw SynthesisError("assemble_pidb: index out of range");
    }
    if (!seen.insert(indices[j]).second) {
      throw SynthesisError("assemble_pidb: two gains share a state index");
    }
    k(0, indices[j]) = values[j];
  }
  return LinearFeedback(k, FeedbackSign::kNegative, std::move(state_ref));
}

}  // namespace safe_embed::synthesis
