#include "safe_embed/embedding.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace safe_embed {

namespace {

[[noreturn]] void breach(const std::string& label, int index, double margin) {
  std::ostringstream os;
  os << "safety constraint '" << label << "' (#" << index
     << ") violated: h = " << margin;
  throw SafetyBreach(os.str(), index, margin);
}

}  // namespace

BarrierStateSpec make_bas_spec(const BarrierRequest& request,
                               const Vector& x_eq, BarrierSlope slope) {
  if (!(request.gamma > 0.0)) {
    throw ModelError("barrier state for '" + request.constraint.label() +
                     "': gamma must be positive");
  }
  const double h_eq = request.constraint.value(x_eq);
  if (!(h_eq > 0.0)) {
    std::ostringstream os;
    os << "barrier state for '" << request.constraint.label()
       << "': equilibrium is not strictly safe (h = " << h_eq << ")";
    throw ModelError(os.str());
  }
  return BarrierStateSpec{request.constraint, request.barrier, request.gamma,
                          request.barrier.value(h_eq), slope};
}

double bas_rhs(const BarrierStateSpec& spec, const Vector& x, double z,
               const Vector& xdot, int index) {
  const double h = spec.constraint.value(x);
  if (!(h > 0.0)) breach(spec.constraint.label(), index, h);
  const double lie = spec.constraint.gradient(x).dot(xdot);
  const double shifted = z + spec.beta0;
  const double slope = spec.slope == BarrierSlope::kFromState
                           ? spec.barrier.phi(shifted)
                           : spec.barrier.slope(h);
  return slope * lie - spec.gamma * (shifted - spec.barrier.value(h));
}

SafetyConstraint aggregate_constraints(std::vector<SafetyConstraint> parts,
                                       std::string label) {
  if (parts.empty()) {
    throw ModelError("aggregate_constraints: need at least one constraint");
  }
  if (parts.size() == 1) {
    auto single = parts.front();
    return SafetyConstraint(std::move(label),
                            [single](const Vector& x) { return single.value(x); },
                            [single](const Vector& x) { return single.gradient(x); },
                            [single](const Vector& x) { return single.hessian(x); });
  }
  auto shared = std::make_shared<const std::vector<SafetyConstraint>>(
      std::move(parts));
  auto values = [shared](const Vector& x) {
    std::vector<double> h;
    h.reserve(shared->size());
    for (std::size_t i = 0; i < shared->size(); ++i) {
      const double hi = (*shared)[i].value(x);
      if (!(hi > 0.0)) breach((*shared)[i].label(), static_cast<int>(i), hi);
      h.push_back(hi);
    }
    return h;
  };
  auto h = [values](const Vector& x) {
    double inv = 0.0;
    for (double hi : values(x)) inv += 1.0 / hi;
    return 1.0 / inv;
  };
  // grad H = H^2 sum grad h_i / h_i^2.
  auto grad = [shared, values](const Vector& x) {
    const auto hs = values(x);
    double inv = 0.0;
    Vector acc = Vector::Zero(x.size());
    for (std::size_t i = 0; i < hs.size(); ++i) {
      inv += 1.0 / hs[i];
      acc += (*shared)[i].gradient(x) / (hs[i] * hs[i]);
    }
    const double big_h = 1.0 / inv;
    return Vector(big_h * big_h * acc);
  };
  return SafetyConstraint(std::move(label), h, grad);
}

double consistent_z0(const BarrierStateSpec& spec, const Vector& x0) {
  const double h = spec.constraint.value(x0);
  if (!(h > 0.0)) breach(spec.constraint.label(), 0, h);
  return spec.barrier.value(h) - spec.beta0;
}

EmbeddedSystem::EmbeddedSystem(ControlSystem base,
                               std::vector<BarrierStateSpec> specs)
    : base_(std::move(base)), specs_(std::move(specs)) {
  for (const auto& s : specs_) {
    if (!(s.gamma > 0.0)) {
      throw ModelError("embedded system: gamma must be positive");
    }
  }
  Vector f_eq;
  try {
    f_eq = (*this)(equilibrium_state(), equilibrium_input());
  } catch (const SafetyBreach& e) {
    throw ModelError(std::string("embedded system: equilibrium unsafe: ") +
                     e.what());
  }
  if (!f_eq.allFinite() || f_eq.cwiseAbs().maxCoeff() > 1e-9) {
    std::ostringstream os;
    os << "embedded system: fbar(equilibrium) is not zero (|fbar|_inf = "
       << f_eq.cwiseAbs().maxCoeff() << ")";
    throw ModelError(os.str());
  }
}

Vector EmbeddedSystem::equilibrium_state() const {
  Vector xbar = Vector::Zero(dim());
  xbar.head(n()) = base_.equilibrium().x;
  return xbar;
}

Vector EmbeddedSystem::operator()(const Vector& xbar, const Vector& u) const {
  return (*this)(xbar, u, Vector::Zero(base_.exogenous_dim()));
}

Vector EmbeddedSystem::operator()(const Vector& xbar, const Vector& u,
                                  const Vector& w) const {
  if (xbar.size() != dim()) {
    throw DimensionError("embedded system: state has the wrong dimension");
  }
  const Vector x = xbar.head(n());
  // Check every margin before touching the plant so the first violated
  // constraint is the one reported.
  for (int i = 0; i < barrier_count(); ++i) {
    const double h = specs_[i].constraint.value(x);
    if (!(h > 0.0)) breach(specs_[i].constraint.label(), i, h);
  }
  const Vector xdot = base_(x, u, w);
  Vector out(dim());
  out.head(n()) = xdot;
  for (int i = 0; i < barrier_count(); ++i) {
    out(n() + i) = bas_rhs(specs_[i], x, xbar(n() + i), xdot, i);
  }
  return out;
}

Vector EmbeddedSystem::margins(const Vector& xbar) const {
  const Vector x = xbar.head(n());
  Vector h(barrier_count());
  for (int i = 0; i < barrier_count(); ++i) h(i) = specs_[i].constraint.value(x);
  return h;
}

Vector EmbeddedSystem::shifted_barriers(const Vector& x) const {
  Vector z(barrier_count());
  for (int i = 0; i < barrier_count(); ++i) {
    const double h = specs_[i].constraint.value(x);
    if (!(h > 0.0)) breach(specs_[i].constraint.label(), i, h);
    z(i) = specs_[i].barrier.value(h) - specs_[i].beta0;
  }
  return z;
}

Vector EmbeddedSystem::consistent_state(const Vector& x0) const {
  if (x0.size() != n()) {
    throw DimensionError("consistent_state: plant state has the wrong size");
  }
  Vector xbar(dim());
  xbar.head(n()) = x0;
  xbar.tail(barrier_count()) = shifted_barriers(x0);
  return xbar;
}

EmbeddedSystem embed(const ControlSystem& system,
                     const std::vector<BarrierRequest>& requests) {
  std::vector<BarrierStateSpec> specs;
  specs.reserve(requests.size());
  for (const auto& r : requests) {
    specs.push_back(make_bas_spec(r, system.equilibrium().x));
  }
  return EmbeddedSystem(system, std::move(specs));
}

SafetyConstraint lift_constraint(const SafetyConstraint& c, int offset,
                                 int size, int full_dim) {
  if (offset < 0 || size <= 0 || offset + size > full_dim) {
    throw ModelError("lift_constraint: sub-vector out of range");
  }
  return SafetyConstraint(
      c.label(),
      [c, offset, size](const Vector& x) {
        return c.value(x.segment(offset, size));
      },
      [c, offset, size, full_dim](const Vector& x) {
        Vector g = Vector::Zero(full_dim);
        g.segment(offset, size) = c.gradient(x.segment(offset, size));
        return g;
      },
      [c, offset, size, full_dim](const Vector& x) {
        Matrix hess = Matrix::Zero(full_dim, full_dim);
        hess.block(offset, offset, size, size) =
            c.hessian(x.segment(offset, size));
        return hess;
      });
}

EmbeddedSystem input_embed(const ControlSystem& system,
                           const std::vector<BarrierRequest>& input_constraints,
                           const std::vector<BarrierRequest>& state_constraints) {
  const int n = system.n();
  const int m = system.m();
  if (m == 0) throw ModelError("input_embed: system has no inputs");

  ControlSystem::Field field = [system, n, m](const Vector& xt, const Vector& v,
                                              const Vector& w) {
    Vector out(n + m);
    out.head(n) = system(xt.head(n), xt.tail(m), w);
    out.tail(m) = v;
    return out;
  };
  std::optional<ControlSystem::JacobianFn> jac;
  if (system.has_analytic_jacobians()) {
    jac = [system, n, m](const Vector& xt, const Vector&) {
      const auto base = system.jacobians(xt.head(n), xt.tail(m));
      numkit::Jacobians j{Matrix::Zero(n + m, n + m), Matrix::Zero(n + m, m)};
      j.dx.topLeftCorner(n, n) = base.dx;
      j.dx.topRightCorner(n, m) = base.du;
      j.du.bottomRows(m) = Matrix::Identity(m, m);
      return j;
    };
  }
  OperatingPoint eq;
  eq.x.resize(n + m);
  eq.x << system.equilibrium().x, system.equilibrium().u;
  eq.u = Vector::Zero(m);
  ControlSystem extended(system.name() + "+input", n + m, m, field, eq,
                         system.exogenous_dim(), jac);

  std::vector<BarrierStateSpec> specs;
  for (const auto& r : input_constraints) {
    BarrierRequest lifted{lift_constraint(r.constraint, n, m, n + m), r.barrier,
                          r.gamma};
    try {
      specs.push_back(
          make_bas_spec(lifted, eq.x, BarrierSlope::kFromConstraint));
    } catch (const ModelError& e) {
      throw ModelError(std::string("input_embed: equilibrium input violates "
                                   "an input constraint: ") +
                       e.what());
    }
  }
  for (const auto& r : state_constraints) {
    BarrierRequest lifted{lift_constraint(r.constraint, 0, n, n + m), r.barrier,
                          r.gamma};
    specs.push_back(make_bas_spec(lifted, eq.x));
  }
  return EmbeddedSystem(std::move(extended), std::move(specs));
}

}  // namespace safe_embed
