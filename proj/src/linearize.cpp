#include "safe_embed/linearize.hpp"

#include <algorithm>

namespace safe_embed {

LinearizedSystem linearize_embedded(const EmbeddedSystem& sys,
                                    const Vector& state, const Vector& input) {
  if (state.size() != sys.dim() || input.size() != sys.m()) {
    throw DimensionError("linearize_embedded: operating point size mismatch");
  }
  const int n = sys.n();
  const int nbar = sys.dim();
  const int m = sys.m();

  LinearizedSystem lin;
  lin.state = state;
  lin.input = input;
  lin.drift = sys(state, input);  // also rejects unsafe operating points

  const Vector x = state.head(n);
  const Vector xdot = lin.drift.head(n);
  const auto plant = sys.base().jacobians(x, input);

  lin.a = Matrix::Zero(nbar, nbar);
  lin.b = Matrix::Zero(nbar, m);
  lin.a.topLeftCorner(n, n) = plant.dx;
  lin.b.topRows(n) = plant.du;

  for (int i = 0; i < sys.barrier_count(); ++i) {
    const auto& spec = sys.specs()[i];
    const double h = spec.constraint.value(x);
    const Vector grad = spec.constraint.gradient(x);
    const double lie = grad.dot(xdot);
    const RowVector dlie_dx =
        (spec.constraint.hessian(x) * xdot + plant.dx.transpose() * grad)
            .transpose();
    const RowVector dlie_du = grad.transpose() * plant.du;
    const double zeta = state(n + i) + spec.beta0;
    const double correction = spec.gamma * spec.barrier.slope(h);

    const int row = n + i;
    if (spec.slope == BarrierSlope::kFromState) {
      const double phi = spec.barrier.phi(zeta);
      lin.a.block(row, 0, 1, n) = phi * dlie_dx + correction * grad.transpose();
      lin.a(row, row) = spec.barrier.phi_slope(zeta) * lie - spec.gamma;
      lin.b.row(row) = phi * dlie_du;
    } else {
      const double slope = spec.barrier.slope(h);
      lin.a.block(row, 0, 1, n) =
          spec.barrier.curvature(h) * lie * grad.transpose() +
          slope * dlie_dx + correction * grad.transpose();
      lin.a(row, row) = -spec.gamma;
      lin.b.row(row) = slope * dlie_du;
    }
  }
  return lin;
}

LinearizedSystem linearize_embedded(const EmbeddedSystem& sys) {
  return linearize_embedded(sys, sys.equilibrium_state(),
                            sys.equilibrium_input());
}

LinearizedSystem linearize_fd(const EmbeddedSystem& sys, const Vector& state,
                              const Vector& input) {
  const auto j = numkit::jacobian_fd(
      [&sys](const Vector& xbar, const Vector& u) { return sys(xbar, u); },
      state, input);
  return LinearizedSystem{j.dx, j.du, state, input, sys(state, input)};
}

double linearization_mismatch(const LinearizedSystem& a,
                              const LinearizedSystem& b) {
  if (a.a.rows() != b.a.rows() || a.a.cols() != b.a.cols() ||
      a.b.rows() != b.b.rows() || a.b.cols() != b.b.cols()) {
    throw DimensionError("linearization_mismatch: shape mismatch");
  }
  auto rel = [](const Matrix& x, const Matrix& ref) {
    if (x.size() == 0) return 0.0;
    return ((x - ref).array().abs() / (1.0 + ref.array().abs())).maxCoeff();
  };
  return std::max(rel(a.a, b.a), rel(a.b, b.b));
}

}  // namespace safe_embed
