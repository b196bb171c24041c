#pragma once

// Analytic initial/reference velocity fields and densities of the testcases.

#include <cmath>
#include <numbers>

#include "lagflow/geometry.hpp"

namespace lagflow::flows {

/// Stationary Beltrami flow on [-1/2, 1/2]^2:
/// v(x1, x2) = (-cos(pi x1) sin(pi x2), sin(pi x1) cos(pi x2)).
inline Point2 beltrami(double /*t*/, Point2 p) {
  using std::numbers::pi;
  return {-std::cos(pi * p.x) * std::sin(pi * p.y), std::sin(pi * p.x) * std::cos(pi * p.y)};
}

/// Unit horizontal speed below x2 = 0, at rest above.
inline Point2 shear_layer(double /*t*/, Point2 p) { return p.y < 0.0 ? Point2{1.0, 0.0} : Point2{0.0, 0.0}; }

inline Point2 at_rest(double /*t*/, Point2 /*p*/) { return {0.0, 0.0}; }

/// Heavy fluid (density 3) above the interface x2 = eta cos(pi x1), light (1) below.
inline double two_phase_density(Point2 p, double eta) {
  return p.y > eta * std::cos(std::numbers::pi * p.x) ? 3.0 : 1.0;
}

}  // namespace lagflow::flows
