#pragma once

// Symplectic Euler integration of the penalized particle system
//   V^{n+1} = V^n + tau [ (B_i - M_i^n) / eps^2 + rho_i G ]
//   M^{n+1} = M^n + tau V^{n+1}
// where B_i is the barycenter of the i-th equal-area Laguerre cell at M^n.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lagflow/geometry.hpp"
#include "lagflow/ot_solver.hpp"
#include "lagflow/tessellation.hpp"

namespace lagflow {

using VelocityField = std::function<Point2(double t, Point2 p)>;
using DensityField = std::function<double(Point2 p)>;

struct ParticleState {
  std::size_t step = 0;
  double time = 0.0;
  std::vector<Point2> positions;
  std::vector<Point2> velocities;
  std::vector<double> densities;
  std::vector<double> weights_warm;
  std::vector<Point2> origins;  // M^0, kept for coloring

  std::size_t size() const { return positions.size(); }
};

struct SchemeParams {
  double tau = 0.0;
  double epsilon = 0.0;
  Point2 gravity{0.0, 0.0};
  double horizon = 0.0;

  void validate() const {
    if (!(std::isfinite(tau) && tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
    if (!(std::isfinite(epsilon) && epsilon > 0.0))
      throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
    if (!is_finite(gravity)) throw Error(ErrorCode::InvalidArgument, "gravity must be finite");
  }

  /// tau / eps^2, the quantity the Hamiltonian bounds depend on.
  double stability_ratio() const { return tau / (epsilon * epsilon); }

  /// Number of steps covering [0, horizon].
  std::size_t step_count() const {
    if (!(horizon > 0.0)) return 0;
    // absorb rounding in horizon = k * tau
    return static_cast<std::size_t>(std::floor(horizon / tau * (1.0 + 1e-12)));
  }
};

/// One symplectic Euler step: kick with `force` evaluated at the old
/// position, then drift with the new velocity.
template <class Vec, class Force>
void symplectic_euler_step(Vec& position, Vec& velocity, Force&& force, double tau) {
  velocity = velocity + tau * force(position);
  position = position + tau * velocity;
}

enum class InitMode {
  Centroid,     // M0 = centroid(omega_i), V0 = v0(M0)
  CellAverage,  // V0 = mean of v0 over omega_i (16 quadrature points per cell)
};

namespace detail {

// Mean of f over a convex cell by tensor 4-point Gauss-Legendre: 16 points on
// quadrilaterals (bilinear map), 16 per fan triangle otherwise (collapsed map).
inline Point2 cell_average(const ConvexPolygon& cell, const std::function<Point2(Point2)>& f) {
  constexpr double node[4] = {0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
                              0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526};
  constexpr double weight[4] = {0.5 * 0.3478548451374538, 0.5 * 0.6521451548625461, 0.5 * 0.6521451548625461,
                                0.5 * 0.3478548451374538};
  const auto v = cell.vertices();
  Point2 acc{0, 0};
  double area = 0;
  if (v.size() == 4) {
    const Point2 a = v[0], b = v[1], c = v[2], d = v[3];
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double u = node[i], w = node[j];
        const Point2 x = (1 - u) * (1 - w) * a + u * (1 - w) * b + u * w * c + (1 - u) * w * d;
        const double jac = cross((1 - w) * (b - a) + w * (c - d), (1 - u) * (d - a) + u * (c - b));
        acc += weight[i] * weight[j] * jac * f(x);
        area += weight[i] * weight[j] * jac;
      }
    return acc / area;
  }
  for (std::size_t k = 1; k + 1 < v.size(); ++k) {
    const Point2 a = v[0], b = v[k], c = v[k + 1];
    const double twice = cross(b - a, c - b);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double u = node[i], w = node[j];
        const Point2 x = a + u * (b - a) + u * w * (c - b);
        const double jac = u * twice;
        acc += weight[i] * weight[j] * jac * f(x);
        area += weight[i] * weight[j] * jac;
      }
  }
  return acc / area;
}

}  // namespace detail

/// Initial particle state on a partition.
inline ParticleState init_state(const Partition& partition, const VelocityField& v0,
                                const DensityField& density = {}, InitMode mode = InitMode::Centroid) {
  ParticleState s;
  const std::size_t n = partition.size();
  s.positions = partition.centroids;
  s.origins = partition.centroids;
  s.velocities.resize(n);
  s.densities.assign(n, 1.0);
  s.weights_warm.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == InitMode::Centroid || !v0) {
      s.velocities[i] = v0 ? v0(0.0, s.positions[i]) : Point2{0, 0};
    } else {
      s.velocities[i] = detail::cell_average(partition.cells[i], [&](Point2 x) { return v0(0.0, x); });
    }
    if (density) {
      s.densities[i] = density(s.positions[i]);
      if (!(s.densities[i] > 0.0)) throw Error(ErrorCode::InvalidArgument, "densities must be positive");
    }
  }
  return s;
}

/// Equal-area transport problem at the current particle positions.
inline OTSolution solve_at(const ParticleState& state, const Domain& domain, const SolverOptions& options = {}) {
  auto problem = OTProblem::uniform(state.positions, domain);
  if (state.weights_warm.size() == state.size())
    return solve(problem, std::span<const double>(state.weights_warm), options);
  return solve(problem, std::nullopt, options);
}

struct StepResult {
  ParticleState state;
  OTSolution ot;  // solved at state.positions
};

/// Advances one step given the transport solution at the current positions.
/// The returned solution is solved at the new positions, warm-started.
inline StepResult step(const ParticleState& state, const OTSolution& ot, const SchemeParams& params,
                       const Domain& domain, const SolverOptions& options = {}) {
  params.validate();
  const std::size_t n = state.size();
  if (ot.size() != n) throw Error(ErrorCode::InvalidArgument, "transport solution does not match the state");
  ParticleState next = state;
  const double stiffness = 1.0 / (params.epsilon * params.epsilon);
  for (std::size_t i = 0; i < n; ++i) {
    // The diagram keeps wrapped sites; B_i is expressed around that copy.
    const Point2 site = ot.diagram.sites[i];
    const Point2 pull = ot.barycenters[i] - site;
    const Point2 gravity = state.densities[i] * params.gravity;
    Point2 position = site;
    symplectic_euler_step(position, next.velocities[i], [&](Point2) { return stiffness * pull + gravity; },
                          params.tau);
    next.positions[i] = domain.wrap(position);
  }
  next.step = state.step + 1;
  next.time = static_cast<double>(next.step) * params.tau;
  try {
    check_distinct_sites(next.positions, domain);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DuplicateSites)
      throw Error(ErrorCode::PositionCollision, "step " + std::to_string(next.step) + ": " + e.what());
    throw;
  }
  next.weights_warm = ot.weights;
  OTSolution next_ot = solve_at(next, domain, options);
  next.weights_warm = next_ot.weights;
  return {std::move(next), std::move(next_ot)};
}

/// Convenience overload solving the transport problem at `state` first.
inline ParticleState step(const ParticleState& state, const SchemeParams& params, const Domain& domain,
                          const SolverOptions& options = {}) {
  return step(state, solve_at(state, domain, options), params, domain, options).state;
}

/// Observer contract: (step index, time, state after the step, transport solution at its positions).
using Observer = std::function<void(std::size_t, double, const ParticleState&, const OTSolution&)>;

/// Runs floor(horizon / tau) steps, calling every observer after each step.
/// Errors are rethrown with the index of the failing step.
inline ParticleState run(const ParticleState& initial, const SchemeParams& params, const Domain& domain,
                         std::span<const Observer> observers = {}, const SolverOptions& options = {}) {
  params.validate();
  if (params.horizon < 0.0) throw Error(ErrorCode::InvalidArgument, "horizon must be non-negative");
  const std::size_t steps = params.step_count();
  if (steps == 0) return initial;
  ParticleState state = initial;
  OTSolution ot;
  try {
    ot = solve_at(state, domain, options);
  } catch (const Error& e) {
    throw Error(e.code(), "at step " + std::to_string(state.step) + ": " + e.what());
  }
  state.weights_warm = ot.weights;
  for (std::size_t k = 0; k < steps; ++k) {
    StepResult r;
    try {
      r = step(state, ot, params, domain, options);
    } catch (const Error& e) {
      throw Error(e.code(), "at step " + std::to_string(state.step + 1) + ": " + e.what());
    }
    state = std::move(r.state);
    ot = std::move(r.ot);
    for (const auto& obs : observers) obs(state.step, state.time, state, ot);
  }
  return state;
}

/// Closed-form trajectory of the planar toy problem
///   z'' = (P(z) - z) / eps^2,  z(0) = (0, h0),  z'(0) = (1, h1),
/// with P the orthogonal projection onto the horizontal axis.
inline Point2 toy_geodesic_reference(double h0, double h1, double epsilon, double t) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  return {t, h0 * std::cos(t / epsilon) + epsilon * h1 * std::sin(t / epsilon)};
}

}  // namespace lagflow
