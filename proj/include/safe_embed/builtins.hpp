#pragma once

// Named plant models with JSON parameter maps. Each builtin bundles the
// dynamics, its analytic Jacobians and the safety constraints that go with
// it, so configuration files never need user-written dynamics.

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "safe_embed/model.hpp"

namespace safe_embed {

using Json = nlohmann::json;

/// Invalid configuration: unknown key, wrong type, bad value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Recursively overlays `overrides` on `defaults`. Every override key must
/// exist in the defaults with a compatible JSON type (integers are accepted
/// where floats are expected; arrays are checked element-wise against the
/// first default element). `where` prefixes error messages.
Json merge_params(const Json& defaults, const Json& overrides,
                  const std::string& where = "");

/// Strict typed readers used when decoding parameter maps.
double json_number(const Json& j, const std::string& key);
Vector json_vector(const Json& j, const std::string& key);
Matrix json_matrix(const Json& j, const std::string& key);
Json json_from_vector(const Vector& v);
Json json_from_matrix(const Matrix& m);

namespace builtins {

struct PlantModel {
  ControlSystem system;
  std::vector<SafetyConstraint> state_constraints;
  /// Constraints g(u) > 0 on the input vector (only linear2d defines them).
  std::vector<SafetyConstraint> input_constraints;
  std::vector<std::string> state_names;
};

const std::vector<std::string>& names();

/// Default parameter map for a builtin. Throws ConfigError for unknown names.
Json default_params(const std::string& name);

/// Builds the plant from a (possibly partial) parameter map.
///
///   case_study  x' = -x + x^2 u,              h = limit - x
///   linear2d    x' = A x + B u,               h = |x - c|^2 - r^2,
///                                             g = (L - u, u + L)
///   acc         (v_l, v_f, D, e, a_f),        h = D - tau v_f,
///               exogenous w = leader acceleration
///   robots2d    two planar single integrators, h = (|p_i - p_j|^2 - delta^2,
///                                                   |p_i - o|^2 - r^2,
///                                                   |p_j - o|^2 - r^2)
PlantModel make_plant(const std::string& name, const Json& params);

}  // namespace builtins
}  // namespace safe_embed
