#include "safe_embed/model.hpp"

#include <cmath>
#include <sstream>

namespace safe_embed {

ControlSystem::ControlSystem(std::string name, int n, int m, Field f,
                             OperatingPoint equilibrium, int exogenous_dim,
                             std::optional<JacobianFn> jacobians)
    : name_(std::move(name)),
      n_(n),
      m_(m),
      exogenous_dim_(exogenous_dim),
      f_(std::move(f)),
      equilibrium_(std::move(equilibrium)),
      jacobians_(std::move(jacobians)) {
  if (n_ <= 0 || m_ < 0 || exogenous_dim_ < 0) {
    throw ModelError("ControlSystem " + name_ + ": invalid dimensions");
  }
  if (!f_) throw ModelError("ControlSystem " + name_ + ": empty vector field");
  if (equilibrium_.x.size() == 0) equilibrium_.x = Vector::Zero(n_);
  if (equilibrium_.u.size() == 0) equilibrium_.u = Vector::Zero(m_);
  if (equilibrium_.x.size() != n_ || equilibrium_.u.size() != m_) {
    throw ModelError("ControlSystem " + name_ +
                     ": equilibrium has the wrong dimensions");
  }
  const Vector f_eq = (*this)(equilibrium_.x, equilibrium_.u);
  if (f_eq.size() != n_) {
    throw ModelError("ControlSystem " + name_ +
                     ": vector field returns the wrong dimension");
  }
  if (!f_eq.allFinite() || f_eq.cwiseAbs().maxCoeff() > 1e-9) {
    std::ostringstream os;
    os << "ControlSystem " << name_
       << ": f(equilibrium) is not zero (|f|_inf = "
       << f_eq.cwiseAbs().maxCoeff() << ")";
    throw ModelError(os.str());
  }
}

Vector ControlSystem::operator()(const Vector& x, const Vector& u) const {
  return f_(x, u, Vector::Zero(exogenous_dim_));
}

Vector ControlSystem::operator()(const Vector& x, const Vector& u,
                                 const Vector& w) const {
  if (w.size() != exogenous_dim_) {
    throw DimensionError("ControlSystem " + name_ +
                         ": exogenous signal has the wrong dimension");
  }
  return f_(x, u, w);
}

numkit::Jacobians ControlSystem::jacobians(const Vector& x,
                                           const Vector& u) const {
  if (jacobians_) return (*jacobians_)(x, u);
  return numkit::jacobian_fd(
      [this](const Vector& xx, const Vector& uu) { return (*this)(xx, uu); }, x,
      u);
}

SafetyConstraint::SafetyConstraint(std::string label, Scalar h,
                                   std::optional<Gradient> grad,
                                   std::optional<Hessian> hessian)
    : label_(std::move(label)),
      h_(std::move(h)),
      grad_(std::move(grad)),
      hessian_(std::move(hessian)) {
  if (!h_) throw ModelError("SafetyConstraint " + label_ + ": empty h");
}

Vector SafetyConstraint::gradient(const Vector& x) const {
  if (grad_) return (*grad_)(x);
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = numkit::default_fd_step(x(i));
    Vector xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    g(i) = (h_(xp) - h_(xm)) / (xp(i) - xm(i));
  }
  return g;
}

Matrix SafetyConstraint::hessian(const Vector& x) const {
  if (hessian_) return (*hessian_)(x);
  const auto n = x.size();
  Matrix hess(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = numkit::default_fd_step(x(i));
    Vector xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    hess.col(i) = (gradient(xp) - gradient(xm)) / (xp(i) - xm(i));
  }
  return 0.5 * (hess + hess.transpose());
}

std::string to_string(BarrierKind kind) {
  switch (kind) {
    case BarrierKind::kInverse:
      return "inverse";
    case BarrierKind::kLog:
      return "log";
    case BarrierKind::kCustom:
      return "custom";
  }
  return "unknown";
}

BarrierKind barrier_kind_from_string(const std::string& s) {
  if (s == "inverse") return BarrierKind::kInverse;
  if (s == "log") return BarrierKind::kLog;
  if (s == "custom") return BarrierKind::kCustom;
  throw ModelError("unsupported barrier kind '" + s + "'");
}

namespace {

void require_positive(double eta) {
  if (!(eta > 0.0)) {
    std::ostringstream os;
    os << "barrier evaluated outside (0, inf) at eta = " << eta;
    throw ModelError(os.str());
  }
}

}  // namespace

BarrierFunction BarrierFunction::custom(Ops ops) {
  if (!ops.value || !ops.slope || !ops.curvature || !ops.inverse || !ops.phi ||
      !ops.phi_slope) {
    throw ModelError("custom barrier: every operator must be supplied");
  }
  return BarrierFunction(BarrierKind::kCustom, std::move(ops));
}

double BarrierFunction::value(double eta) const {
  require_positive(eta);
  return ops_.value(eta);
}

double BarrierFunction::slope(double eta) const {
  require_positive(eta);
  return ops_.slope(eta);
}

double BarrierFunction::curvature(double eta) const {
  require_positive(eta);
  return ops_.curvature(eta);
}

BarrierFunction make_barrier(BarrierKind kind) {
  switch (kind) {
    case BarrierKind::kInverse:
      return BarrierFunction(
          kind, {
                    [](double eta) { return 1.0 / eta; },
                    [](double eta) { return -1.0 / (eta * eta); },
                    [](double eta) { return 2.0 / (eta * eta * eta); },
                    [](double beta) { return 1.0 / beta; },
                    [](double beta) { return -beta * beta; },
                    [](double beta) { return -2.0 * beta; },
                });
    case BarrierKind::kLog:
      // B^-1(beta) = 1 / (e^beta - 1), so phi(beta) = -(e^beta - 1)^2 e^-beta
      // = -2 (cosh(beta) - 1) and phi'(beta) = -2 sinh(beta).
      return BarrierFunction(
          kind,
          {
              [](double eta) { return std::log1p(eta) - std::log(eta); },
              [](double eta) { return -1.0 / (eta * (1.0 + eta)); },
              [](double eta) {
                return 1.0 / (eta * eta) - 1.0 / ((1.0 + eta) * (1.0 + eta));
              },
              [](double beta) { return 1.0 / std::expm1(beta); },
              [](double beta) { return -2.0 * (std::cosh(beta) - 1.0); },
              [](double beta) { return -2.0 * std::sinh(beta); },
          });
    case BarrierKind::kCustom:
      break;
  }
  throw ModelError("make_barrier: kind '" + to_string(kind) +
                   "' needs explicit operators (BarrierFunction::custom)");
}

LinearFeedback::LinearFeedback(Matrix k, FeedbackSign s, Vector x_ref,
                               Vector u_ref)
    : gain(std::move(k)),
      sign(s),
      state_ref(std::move(x_ref)),
      input_ref(std::move(u_ref)) {
  if (state_ref.size() != 0 && state_ref.size() != gain.cols()) {
    throw ModelError("LinearFeedback: state reference size mismatch");
  }
  if (input_ref.size() != 0 && input_ref.size() != gain.rows()) {
    throw ModelError("LinearFeedback: input reference size mismatch");
  }
}

Vector LinearFeedback::operator()(const Vector& xbar) const {
  if (xbar.size() != gain.cols()) {
    throw DimensionError("LinearFeedback: state has the wrong dimension");
  }
  Vector u = state_ref.size() ? Vector(gain * (xbar - state_ref)) : Vector(gain * xbar);
  if (sign == FeedbackSign::kNegative) u = -u;
  if (input_ref.size()) u += input_ref;
  return u;
}

std::string to_string(DisturbanceKind kind) {
  switch (kind) {
    case DisturbanceKind::kZero:
      return "zero";
    case DisturbanceKind::kUniformBounded:
      return "uniform_bounded";
    case DisturbanceKind::kUniformDecreasingEnvelope:
      return "uniform_decreasing_envelope";
    case DisturbanceKind::kSamples:
      return "samples";
  }
  return "unknown";
}

DisturbanceKind disturbance_kind_from_string(const std::string& s) {
  if (s == "zero") return DisturbanceKind::kZero;
  if (s == "uniform_bounded") return DisturbanceKind::kUniformBounded;
  if (s == "uniform_decreasing_envelope")
    return DisturbanceKind::kUniformDecreasingEnvelope;
  if (s == "samples") return DisturbanceKind::kSamples;
  throw ModelError("unsupported disturbance kind '" + s + "'");
}

DisturbanceSignal DisturbanceSignal::zero(int dim) {
  DisturbanceSignal s;
  s.dim = dim;
  return s;
}

DisturbanceSignal DisturbanceSignal::uniform(int dim, double bound,
                                             std::uint64_t seed) {
  DisturbanceSignal s;
  s.kind = DisturbanceKind::kUniformBounded;
  s.dim = dim;
  s.bound = bound;
  s.seed = seed;
  return s;
}

DisturbanceSignal DisturbanceSignal::decreasing(int dim, double bound,
                                                double decay_rate,
                                                std::uint64_t seed) {
  DisturbanceSignal s = uniform(dim, bound, seed);
  s.kind = DisturbanceKind::kUniformDecreasingEnvelope;
  s.decay_rate = decay_rate;
  return s;
}

namespace {

// SplitMix64 finalizer; turns a (seed, step, channel) counter into 64
// well-mixed bits.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [-1, 1).
double counter_uniform(std::uint64_t seed, long step, int channel) {
  std::uint64_t z = mix64(seed);
  z = mix64(z ^ static_cast<std::uint64_t>(step));
  z = mix64(z ^ (static_cast<std::uint64_t>(channel) << 48));
  const double unit = static_cast<double>(z >> 11) * 0x1.0p-53;
  return 2.0 * unit - 1.0;
}

}  // namespace

Vector disturbance_sample(const DisturbanceSignal& signal, long step,
                          double dt) {
  Vector d = Vector::Zero(signal.dim);
  if (signal.kind == DisturbanceKind::kZero) return d;
  std::vector<int> channels = signal.channels;
  if (channels.empty()) {
    for (int i = 0; i < signal.dim; ++i) channels.push_back(i);
  }
  const double t = static_cast<double>(step) * dt;
  for (int c : channels) {
    if (c < 0 || c >= signal.dim) {
      throw ModelError("disturbance channel out of range");
    }
    switch (signal.kind) {
      case DisturbanceKind::kUniformBounded:
        d(c) = signal.bound * counter_uniform(signal.seed, step, c);
        break;
      case DisturbanceKind::kUniformDecreasingEnvelope:
        d(c) = signal.bound * std::exp(-signal.decay_rate * t) *
               counter_uniform(signal.seed, step, c);
        break;
      case DisturbanceKind::kSamples: {
        if (signal.samples.rows() == 0 || signal.samples.cols() != signal.dim) {
          throw ModelError("disturbance sample table has the wrong shape");
        }
        const auto row = std::min<Eigen::Index>(step, signal.samples.rows() - 1);
        d(c) = signal.samples(row, c);
        if (signal.bound > 0.0 && std::abs(d(c)) > signal.bound) {
          throw ModelError("disturbance sample exceeds its declared bound");
        }
        break;
      }
      case DisturbanceKind::kZero:
        break;
    }
  }
  return d;
}

Vector DisturbanceGenerator::sample(long step) {
  Vector d = disturbance_sample(signal_, step, dt_);
  if (d.size()) sup_norm_ = std::max(sup_norm_, d.cwiseAbs().maxCoeff());
  return d;
}

}  // namespace safe_embed
