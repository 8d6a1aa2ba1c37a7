#include "safe_embed/builtins.hpp"

#include <cmath>

namespace safe_embed {

namespace {

bool compatible(const Json& def, const Json& val) {
  if (def.is_number()) return val.is_number();
  if (def.is_boolean()) return val.is_boolean();
  if (def.is_string()) return val.is_string();
  if (def.is_object()) return val.is_object();
  if (def.is_array()) return val.is_array();
  return def.type() == val.type();
}

std::string join_path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

void check_array(const Json& def, const Json& val, const std::string& where) {
  if (def.empty()) return;
  const Json& proto = def.front();
  for (std::size_t i = 0; i < val.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!compatible(proto, val[i])) {
      throw ConfigError("config: '" + at + "' has type " +
                        std::string(val[i].type_name()) + ", expected " +
                        proto.type_name());
    }
    if (proto.is_array()) check_array(proto, val[i], at);
    if (proto.is_object()) merge_params(proto, val[i], at);
  }
}

}  // namespace

Json merge_params(const Json& defaults, const Json& overrides,
                  const std::string& where) {
  if (overrides.is_null()) return defaults;
  if (!overrides.is_object()) {
    throw ConfigError("config: '" + (where.empty() ? "<root>" : where) +
                      "' must be an object");
  }
  Json out = defaults;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const std::string at = join_path(where, it.key());
    if (!defaults.contains(it.key())) {
      throw ConfigError("config: unknown key '" + at + "'");
    }
    const Json& def = defaults.at(it.key());
    const Json& val = it.value();
    if (!compatible(def, val)) {
      throw ConfigError("config: '" + at + "' has type " + val.type_name() +
                        ", expected " + def.type_name());
    }
    if (def.is_object()) {
      out[it.key()] = merge_params(def, val, at);
    } else {
      if (def.is_array()) check_array(def, val, at);
      out[it.key()] = val;
    }
  }
  return out;
}

double json_number(const Json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ConfigError("config: '" + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

Vector json_vector(const Json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ConfigError("config: '" + key + "' must be an array of numbers");
  }
  const Json& a = j.at(key);
  Vector v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) {
      throw ConfigError("config: '" + key + "' must be an array of numbers");
    }
    v(i) = a[i].get<double>();
  }
  return v;
}

Matrix json_matrix(const Json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_array() || j.at(key).empty()) {
    throw ConfigError("config: '" + key + "' must be a non-empty matrix");
  }
  const Json& a = j.at(key);
  const std::size_t cols = a.front().is_array() ? a.front().size() : 0;
  if (cols == 0) throw ConfigError("config: '" + key + "' must be nested arrays");
  Matrix m(a.size(), cols);
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (!a[r].is_array() || a[r].size() != cols) {
      throw ConfigError("config: '" + key + "' rows must have equal length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!a[r][c].is_number()) {
        throw ConfigError("config: '" + key + "' entries must be numbers");
      }
      m(r, c) = a[r][c].get<double>();
    }
  }
  return m;
}

Json json_from_vector(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json json_from_matrix(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    a.push_back(json_from_vector(m.row(r).transpose()));
  }
  return a;
}

namespace builtins {

namespace {

// |x - c|^2 - r^2 over the sub-vector [offset, offset + 2).
SafetyConstraint disk_exclusion(std::string label, int dim, int offset,
                                Vector center, double radius) {
  const double r2 = radius * radius;
  return SafetyConstraint(
      std::move(label),
      [=](const Vector& x) {
        return (x.segment(offset, 2) - center).squaredNorm() - r2;
      },
      [=](const Vector& x) {
        Vector g = Vector::Zero(dim);
        g.segment(offset, 2) = 2.0 * (x.segment(offset, 2) - center);
        return g;
      },
      [=](const Vector&) {
        Matrix hess = Matrix::Zero(dim, dim);
        hess.block(offset, offset, 2, 2) = 2.0 * Matrix::Identity(2, 2);
        return hess;
      });
}

Json case_study_defaults() { return {{"limit", 2.0}}; }

PlantModel case_study(const Json& p) {
  const double limit = json_number(p, "limit");
  if (!(limit > 0.0)) throw ConfigError("case_study: limit must be positive");
  ControlSystem::Field f = [](const Vector& x, const Vector& u, const Vector&) {
    return Vector::Constant(1, -x(0) + x(0) * x(0) * u(0));
  };
  ControlSystem::JacobianFn jac = [](const Vector& x, const Vector& u) {
    numkit::Jacobians j{Matrix(1, 1), Matrix(1, 1)};
    j.dx(0, 0) = -1.0 + 2.0 * x(0) * u(0);
    j.du(0, 0) = x(0) * x(0);
    return j;
  };
  SafetyConstraint h(
      "upper_limit", [limit](const Vector& x) { return limit - x(0); },
      [](const Vector&) { return Vector::Constant(1, -1.0); },
      [](const Vector&) { return Matrix::Zero(1, 1); });
  return PlantModel{ControlSystem("case_study", 1, 1, f, {}, 0, jac),
                    {h},
                    {},
                    {"x"}};
}

Json linear2d_defaults() {
  return {{"a", {{1.0, -5.0}, {0.0, -1.0}}},
          {"b", {{0.0}, {1.0}}},
          {"obstacle_center", {2.0, 2.0}},
          {"obstacle_radius", 0.5},
          {"input_limit", 5.0}};
}

PlantModel linear2d(const Json& p) {
  const Matrix a = json_matrix(p, "a");
  const Matrix b = json_matrix(p, "b");
  if (a.rows() != 2 || a.cols() != 2 || b.rows() != 2 || b.cols() != 1) {
    throw ConfigError("linear2d: A must be 2x2 and B 2x1");
  }
  const Vector center = json_vector(p, "obstacle_center");
  if (center.size() != 2) {
    throw ConfigError("linear2d: obstacle_center must have 2 entries");
  }
  const double radius = json_number(p, "obstacle_radius");
  const double limit = json_number(p, "input_limit");
  if (!(radius > 0.0) || !(limit > 0.0)) {
    throw ConfigError("linear2d: radius and input limit must be positive");
  }
  ControlSystem::Field f = [a, b](const Vector& x, const Vector& u,
                                  const Vector&) { return Vector(a * x + b * u); };
  ControlSystem::JacobianFn jac = [a, b](const Vector&, const Vector&) {
    return numkit::Jacobians{a, b};
  };
  SafetyConstraint g_upper(
      "input_upper", [limit](const Vector& u) { return limit - u(0); },
      [](const Vector&) { return Vector::Constant(1, -1.0); },
      [](const Vector&) { return Matrix::Zero(1, 1); });
  SafetyConstraint g_lower(
      "input_lower", [limit](const Vector& u) { return u(0) + limit; },
      [](const Vector&) { return Vector::Constant(1, 1.0); },
      [](const Vector&) { return Matrix::Zero(1, 1); });
  return PlantModel{ControlSystem("linear2d", 2, 1, f, {}, 0, jac),
                    {disk_exclusion("obstacle", 2, 0, center, radius)},
                    {g_upper, g_lower},
                    {"x1", "x2"}};
}

Json acc_defaults() {
  return {{"mass", 1650.0},        {"f0", 0.1},
          {"f1", 5.0},             {"f2", 0.25},
          {"gravity", 9.81},       {"desired_speed", 22.0},
          {"time_headway", 1.8},   {"desired_distance", 150.0}};
}

// The jerk model differentiates the force balance, so f0 drops out; it is
// kept in the parameter map as part of the vehicle description.
PlantModel acc(const Json& p) {
  const double mass = json_number(p, "mass");
  const double f1 = json_number(p, "f1");
  const double f2 = json_number(p, "f2");
  const double vd = json_number(p, "desired_speed");
  const double tau = json_number(p, "time_headway");
  const double dd = json_number(p, "desired_distance");
  json_number(p, "f0");
  json_number(p, "gravity");
  if (!(mass > 0.0) || tau < 0.0 || !(dd > tau * vd)) {
    throw ConfigError(
        "acc: need mass > 0, time_headway >= 0 and desired_distance > "
        "time_headway * desired_speed");
  }
  ControlSystem::Field f = [=](const Vector& x, const Vector& u,
                               const Vector& w) {
    Vector dx(5);
    dx << w(0), x(4), x(0) - x(1), x(1) - vd,
        (u(0) - f1 * x(4) - f2 * x(1) * x(4)) / mass;
    return dx;
  };
  ControlSystem::JacobianFn jac = [=](const Vector& x, const Vector&) {
    numkit::Jacobians j{Matrix::Zero(5, 5), Matrix::Zero(5, 1)};
    j.dx(1, 4) = 1.0;
    j.dx(2, 0) = 1.0;
    j.dx(2, 1) = -1.0;
    j.dx(3, 1) = 1.0;
    j.dx(4, 1) = -f2 * x(4) / mass;
    j.dx(4, 4) = -(f1 + f2 * x(1)) / mass;
    j.du(4, 0) = 1.0 / mass;
    return j;
  };
  OperatingPoint eq;
  eq.x.resize(5);
  eq.x << vd, vd, dd, 0.0, 0.0;
  eq.u = Vector::Zero(1);
  SafetyConstraint h(
      "time_headway", [tau](const Vector& x) { return x(2) - tau * x(1); },
      [tau](const Vector&) {
        Vector g = Vector::Zero(5);
        g(1) = -tau;
        g(2) = 1.0;
        return g;
      },
      [](const Vector&) { return Matrix::Zero(5, 5); });
  return PlantModel{ControlSystem("acc", 5, 1, f, eq, 1, jac),
                    {h},
                    {},
                    {"v_leader", "v_follower", "distance", "speed_error_integral",
                     "acceleration"}};
}

Json robots2d_defaults() {
  return {{"start", {-1.0, 0.0, 1.0, 0.0}},
          {"target", {1.0, 0.0, -1.0, 0.0}},
          {"separation", 0.1},
          {"obstacle_center", {0.0, 0.0}},
          {"obstacle_radius", 0.25}};
}

PlantModel robots2d(const Json& p) {
  const Vector target = json_vector(p, "target");
  const Vector start = json_vector(p, "start");
  const Vector center = json_vector(p, "obstacle_center");
  const double delta = json_number(p, "separation");
  const double radius = json_number(p, "obstacle_radius");
  if (target.size() != 4 || start.size() != 4 || center.size() != 2) {
    throw ConfigError("robots2d: start/target need 4 entries, center 2");
  }
  if (!(delta > 0.0) || !(radius > 0.0)) {
    throw ConfigError("robots2d: separation and radius must be positive");
  }
  ControlSystem::Field f = [](const Vector&, const Vector& u, const Vector&) {
    return u;
  };
  ControlSystem::JacobianFn jac = [](const Vector&, const Vector&) {
    return numkit::Jacobians{Matrix::Zero(4, 4), Matrix::Identity(4, 4)};
  };
  const double d2 = delta * delta;
  SafetyConstraint separation(
      "separation",
      [d2](const Vector& x) { return (x.head(2) - x.tail(2)).squaredNorm() - d2; },
      [](const Vector& x) {
        Vector g(4);
        g.head(2) = 2.0 * (x.head(2) - x.tail(2));
        g.tail(2) = -g.head(2);
        return g;
      },
      [](const Vector&) {
        Matrix hess(4, 4);
        hess << 2, 0, -2, 0,
                0, 2, 0, -2,
                -2, 0, 2, 0,
                0, -2, 0, 2;
        return hess;
      });
  OperatingPoint eq{target, Vector::Zero(4)};
  return PlantModel{ControlSystem("robots2d", 4, 4, f, eq, 0, jac),
                    {separation,
                     disk_exclusion("obstacle_i", 4, 0, center, radius),
                     disk_exclusion("obstacle_j", 4, 2, center, radius)},
                    {},
                    {"xi1", "xi2", "xj1", "xj2"}};
}

}  // namespace

const std::vector<std::string>& names() {
  static const std::vector<std::string> list = {"case_study", "linear2d", "acc",
                                                "robots2d"};
  return list;
}

Json default_params(const std::string& name) {
  if (name == "case_study") return case_study_defaults();
  if (name == "linear2d") return linear2d_defaults();
  if (name == "acc") return acc_defaults();
  if (name == "robots2d") return robots2d_defaults();
  throw ConfigError("unknown builtin system '" + name + "'");
}

PlantModel make_plant(const std::string& name, const Json& params) {
  const Json p = merge_params(default_params(name), params, name);
  try {
    if (name == "case_study") return case_study(p);
    if (name == "linear2d") return linear2d(p);
    if (name == "acc") return acc(p);
    return robots2d(p);
  } catch (const ModelError& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

}  // namespace builtins
}  // namespace safe_embed
