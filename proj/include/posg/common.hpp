#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace posg {

/// Numeric tolerances used across the library. Validation checks use
/// `validate_eps`; exact algebraic identities are tested against
/// `identity_eps`; LP objectives are compared with `lp_eps`.
struct NumericConfig {
  double validate_eps = 1e-9;
  double identity_eps = 1e-12;
  double lp_eps = 1e-9;
  double prune_eps = 1e-12;
};

inline NumericConfig& numeric_config() {
  static NumericConfig cfg;
  return cfg;
}

/// Remaining-horizon discount mass: (1 - gamma^(H-tau)) / (1 - gamma),
/// or H - tau when gamma == 1.
inline double horizon_mass(int horizon, int step, double gamma) {
  int remaining = horizon - step;
  if (remaining <= 0) return 0.0;
  if (gamma == 1.0) return static_cast<double>(remaining);
  return (1.0 - std::pow(gamma, remaining)) / (1.0 - gamma);
}

struct PosgError : std::runtime_error {
  explicit PosgError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : PosgError {
  using PosgError::PosgError;
};

struct LpError : PosgError {
  using PosgError::PosgError;
};

}  // namespace posg
