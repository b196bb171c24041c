#pragma once

// Energy functionals of the particle scheme: Hamiltonian, modulated energy
// against a reference flow, the conservation checks, the planar toy problem
// and the Beltrami convergence ladder.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lagflow/dynamics.hpp"
#include "lagflow/flows.hpp"
#include "lagflow/tessellation.hpp"

namespace lagflow {

struct Energies {
  double kinetic = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

namespace detail {

inline double particle_mass(const OTSolution& ot) {
  return ot.diagram.domain.area() / static_cast<double>(ot.size());
}

}  // namespace detail

/// H = 1/2 |V|_M^2 + d_S^2 / (2 eps^2), with |V|_M^2 = (area / N) sum |V_i|^2.
inline Energies hamiltonian(const ParticleState& state, const OTSolution& ot, const SchemeParams& params) {
  if (ot.size() != state.size()) throw Error(ErrorCode::InvalidArgument, "transport solution does not match the state");
  const double mass = detail::particle_mass(ot);
  double sum = 0.0;
  for (auto v : state.velocities) sum += norm2(v);
  Energies e;
  e.kinetic = 0.5 * mass * sum;
  e.penalty = ot.dist_sq / (2.0 * params.epsilon * params.epsilon);
  e.total = e.kinetic + e.penalty;
  return e;
}

/// |V - v(t, M)|_M, the velocity error at the particle positions.
inline double l2_velocity_error(const ParticleState& state, const OTSolution& ot, const VelocityField& reference) {
  const double mass = detail::particle_mass(ot);
  double sum = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i)
    sum += norm2(state.velocities[i] - reference(state.time, state.positions[i]));
  return std::sqrt(mass * sum);
}

/// E^n = 1/2 |V^n - v(t^n, M^n)|_M^2 + d_S^2(M^n) / (2 eps^2).
inline double modulated_energy(const ParticleState& state, const OTSolution& ot, const VelocityField& reference,
                               const SchemeParams& params) {
  const double err = l2_velocity_error(state, ot, reference);
  return 0.5 * err * err + ot.dist_sq / (2.0 * params.epsilon * params.epsilon);
}

struct DiagnosticsRecord {
  std::size_t step = 0;
  double time = 0.0;
  double hamiltonian = 0.0;
  double kinetic = 0.0;
  double penalty = 0.0;
  std::optional<double> modulated_energy;
  std::optional<double> l2_velocity_error;
  double min_cell_area = 0.0;
  int newton_iterations = 0;
};

inline DiagnosticsRecord make_record(const ParticleState& state, const OTSolution& ot, const SchemeParams& params,
                                     const VelocityField& reference = {}) {
  DiagnosticsRecord r;
  r.step = state.step;
  r.time = state.time;
  const auto e = hamiltonian(state, ot, params);
  r.kinetic = e.kinetic;
  r.penalty = e.penalty;
  r.hamiltonian = e.total;
  if (reference) {
    r.l2_velocity_error = l2_velocity_error(state, ot, reference);
    r.modulated_energy = modulated_energy(state, ot, reference, params);
  }
  r.min_cell_area = ot.min_accepted_area;
  r.newton_iterations = ot.newton_iterations;
  return r;
}

inline constexpr const char* kDiagnosticsHeader =
    "step,time,kinetic,penalty,hamiltonian,modulated_energy,l2_velocity_error,min_cell_area,newton_iterations";

inline void write_csv_row(std::ostream& out, const DiagnosticsRecord& r) {
  char buf[512];
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char b[64];
    std::snprintf(b, sizeof b, "%.17g", *v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%s,%s,%.17g,%d\n", r.step, r.time, r.kinetic, r.penalty,
                r.hamiltonian, opt(r.modulated_energy).c_str(), opt(r.l2_velocity_error).c_str(), r.min_cell_area,
                r.newton_iterations);
  out << buf;
}

// ---------------------------------------------------------------------------
// Conservation checks

/// (1 - tau^2/eps^2) H^{n+1} <= H^n + slack * H^0.
inline bool one_step_inequality_holds(double h_now, double h_next, double h_initial, const SchemeParams& params,
                                      double slack = 1e-9) {
  const double r = params.tau / params.epsilon;
  return (1.0 - r * r) * h_next <= h_now + slack * h_initial;
}

/// e^{T tau / eps^2} (1/2 |V^0|_M^2 + area(domain) h^2 / (2 eps^2)).
inline double hamiltonian_envelope(double initial_kinetic, double mesh_size, double domain_area,
                                   const SchemeParams& params) {
  const double eps2 = params.epsilon * params.epsilon;
  return std::exp(params.horizon * params.tau / eps2) *
         (initial_kinetic + domain_area * mesh_size * mesh_size / (2.0 * eps2));
}

// ---------------------------------------------------------------------------
// Planar toy problem: geodesic t -> (t, 0) of the horizontal axis approached
// by the penalized Hamiltonian 1/2 |v|^2 + dist(z, axis)^2 / (2 eps^2).

struct ToySample {
  double time = 0.0;
  Point2 position;
  Point2 velocity;
};

inline void require_toy_stability(double epsilon, double tau) {
  if (!(epsilon > 0.0) || !(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon and tau must be positive");
  if (tau > 0.5 * epsilon * epsilon) throw Error(ErrorCode::InvalidArgument, "tau must not exceed eps^2 / 2");
}

/// Discrete symplectic Euler trajectory, samples at n tau for n = 0..floor(horizon / tau).
inline std::vector<ToySample> toy_trajectory(double h0, double h1, double epsilon, double tau, double horizon) {
  require_toy_stability(epsilon, tau);
  const double stiffness = 1.0 / (epsilon * epsilon);
  auto force = [&](Point2 z) { return stiffness * (Point2{z.x, 0.0} - z); };
  Point2 z{0.0, h0}, v{1.0, h1};
  const auto steps = static_cast<std::size_t>(std::floor(horizon / tau * (1.0 + 1e-12)));
  std::vector<ToySample> out;
  out.reserve(steps + 1);
  out.push_back({0.0, z, v});
  for (std::size_t n = 1; n <= steps; ++n) {
    symplectic_euler_step(z, v, force, tau);
    out.push_back({static_cast<double>(n) * tau, z, v});
  }
  return out;
}

inline double toy_hamiltonian(Point2 z, Point2 v, double epsilon) {
  return 0.5 * norm2(v) + z.y * z.y / (2.0 * epsilon * epsilon);
}

/// 1/2 |z' - (1, 0)|^2 + dist(z, axis)^2 / (2 eps^2).
inline double toy_modulated_energy(Point2 z, Point2 zdot, double epsilon) {
  return 0.5 * norm2(zdot - Point2{1.0, 0.0}) + z.y * z.y / (2.0 * epsilon * epsilon);
}

/// Time derivative of toy_geodesic_reference.
inline Point2 toy_geodesic_velocity(double h0, double h1, double epsilon, double t) {
  return {1.0, -h0 / epsilon * std::sin(t / epsilon) + h1 * std::cos(t / epsilon)};
}

/// Sup over steps of the max-norm gap between the discrete trajectory and the closed form.
inline double toy_integrator_check(double h0, double h1, double epsilon, double tau, double horizon) {
  double worst = 0.0;
  for (const auto& s : toy_trajectory(h0, h1, epsilon, tau, horizon)) {
    const Point2 exact = toy_geodesic_reference(h0, h1, epsilon, s.time);
    worst = std::max({worst, std::abs(s.position.x - exact.x), std::abs(s.position.y - exact.y)});
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Convergence ladder on the Beltrami flow

struct LadderRung {
  std::size_t n = 0;
  double epsilon = 0.0;
  double tau = 0.0;
};

struct StudyRow {
  LadderRung rung;
  double h = 0.0;
  double max_modulated_energy = std::numeric_limits<double>::quiet_NaN();
  double initial_modulated_energy = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps = 0;
  std::string error;  // empty on success
};

inline void validate_ladder(const std::vector<LadderRung>& ladder) {
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    const auto& r = ladder[k];
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(r.n))));
    if (r.n == 0 || side * side != r.n)
      throw Error(ErrorCode::ConfigInvalid, "rung " + std::to_string(k) + ": N must be a perfect square");
    if (!(r.epsilon > 0.0) || !(r.tau > 0.0))
      throw Error(ErrorCode::ConfigInvalid, "rung " + std::to_string(k) + ": epsilon and tau must be positive");
    if (r.tau > 0.5 * r.epsilon * r.epsilon)
      throw Error(ErrorCode::ConfigInvalid, "rung " + std::to_string(k) + ": tau/eps^2 = " +
                                                std::to_string(r.tau / (r.epsilon * r.epsilon)) + " exceeds 1/2");
  }
}

/// Beltrami run on a sqrt(N) x sqrt(N) grid partition; returns sup_n E^n.
inline StudyRow beltrami_rung(const LadderRung& rung, double horizon, const SolverOptions& options = {}) {
  StudyRow row;
  row.rung = rung;
  const auto domain = Domain::rectangle(-0.5, -0.5, 0.5, 0.5);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(rung.n))));
  const auto partition = grid_partition(domain, side, side);
  row.h = partition.h;
  const VelocityField reference = flows::beltrami;
  const auto initial = init_state(partition, reference);
  SchemeParams params{rung.tau, rung.epsilon, {0.0, 0.0}, horizon};
  const auto ot0 = solve_at(initial, domain, options);
  row.initial_modulated_energy = modulated_energy(initial, ot0, reference, params);
  double worst = row.initial_modulated_energy;
  const Observer track = [&](std::size_t, double, const ParticleState& s, const OTSolution& ot) {
    worst = std::max(worst, modulated_energy(s, ot, reference, params));
  };
  run(initial, params, domain, std::span<const Observer>(&track, 1), options);
  row.max_modulated_energy = worst;
  row.steps = params.step_count();
  return row;
}

/// Runs every rung; a failing rung records its error and the study continues.
inline std::vector<StudyRow> convergence_study(const std::vector<LadderRung>& ladder, double horizon,
                                               const SolverOptions& options = {}) {
  validate_ladder(ladder);
  std::vector<StudyRow> rows;
  for (const auto& rung : ladder) {
    try {
      rows.push_back(beltrami_rung(rung, horizon, options));
    } catch (const Error& e) {
      StudyRow row;
      row.rung = rung;
      row.error = e.what();
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "n,h,epsilon,tau,steps,max_modulated_energy,error\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu,%.17g,", r.rung.n, r.h, r.rung.epsilon, r.rung.tau,
                  r.steps, r.max_modulated_energy);
    out << buf << '"' << r.error << '"' << '\n';
  }
}

}  // namespace lagflow
