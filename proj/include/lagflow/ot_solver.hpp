#pragma once

// Semi-discrete optimal transport between the uniform measure on a domain and
// a weighted point cloud, solved for the Laguerre weights by damped Newton.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lagflow/geometry.hpp"

namespace lagflow {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct OTProblem {
  std::vector<Point2> sites;
  std::vector<double> target_areas;
  Domain domain;

  /// Every site receives area(domain) / N.
  static OTProblem uniform(std::vector<Point2> sites, Domain domain) {
    OTProblem p;
    p.target_areas.assign(sites.size(), domain.area() / static_cast<double>(std::max<std::size_t>(sites.size(), 1)));
    p.sites = std::move(sites);
    p.domain = std::move(domain);
    return p;
  }

  void validate() const {
    if (sites.empty()) throw Error(ErrorCode::EmptyInput, "no sites");
    if (sites.size() != target_areas.size())
      throw Error(ErrorCode::InvalidArgument, "sites and target areas differ in length");
    double total = 0.0;
    for (double t : target_areas) {
      if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "target areas must be positive");
      total += t;
    }
    if (std::abs(total - domain.area()) > 1e-10 * domain.area())
      throw Error(ErrorCode::InvalidArgument, "target areas do not sum to the domain area");
  }
};

struct SolverOptions {
  double tol = 1e-7;  // max_i |area_i - target_i| <= tol * min_i target_i
  int max_iterations = 100;
  double min_step = 0x1p-30;
};

struct OTSolution {
  std::vector<double> weights;  // gauge-fixed: weights[0] == 0
  PowerDiagram diagram;
  std::vector<double> areas;
  std::vector<Point2> barycenters;
  double dist_sq = 0.0;
  int newton_iterations = 0;
  double initial_min_area = 0.0;  // min cell area at the starting weights
  double min_accepted_area = 0.0; // min cell area over iterates accepted by the line search (the start if none)

  std::size_t size() const { return weights.size(); }
};

/// area_i - target_i for each cell.
inline std::vector<double> residual(const PowerDiagram& diagram, std::span<const double> targets) {
  if (targets.size() != diagram.size()) throw Error(ErrorCode::InvalidArgument, "residual length mismatch");
  std::vector<double> r(targets.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = diagram.areas[i] - targets[i];
  return r;
}

/// Jacobian of the cell areas with respect to the weights:
/// d area_i / d psi_j = l_ij / (2 |M_i - M_j|) off the diagonal, rows summing to zero.
inline SparseMatrix assemble_hessian(const PowerDiagram& diagram) {
  const auto n = static_cast<Eigen::Index>(diagram.size());
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
  for (std::size_t i = 0; i < diagram.size(); ++i) {
    for (const auto& nb : diagram.adjacency[i]) {
      if (nb.site == i || !(nb.distance > 0.0)) continue;
      // half from each side, so the assembled matrix is exactly symmetric
      const double w = 0.5 * nb.length / (2.0 * nb.distance);
      triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(nb.site), w);
      triplets.emplace_back(static_cast<Eigen::Index>(nb.site), static_cast<Eigen::Index>(i), w);
      diag[i] -= w;
      diag[nb.site] -= w;
    }
  }
  for (std::size_t i = 0; i < diag.size(); ++i)
    triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), diag[i]);
  SparseMatrix h(n, n);
  h.setFromTriplets(triplets.begin(), triplets.end());
  return h;
}

namespace detail {

inline bool is_connected(const SparseMatrix& m) {
  const auto n = m.rows();
  if (n <= 1) return true;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> stack{0};
  seen[0] = 1;
  Eigen::Index count = 1;
  while (!stack.empty()) {
    const auto k = stack.back();
    stack.pop_back();
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      if (it.row() == k || it.value() == 0.0 || seen[static_cast<std::size_t>(it.row())]) continue;
      seen[static_cast<std::size_t>(it.row())] = 1;
      ++count;
      stack.push_back(it.row());
    }
  }
  return count == n;
}

}  // namespace detail

/// Solves hessian * step = rhs with step[0] pinned to zero. The remaining
/// (N-1)x(N-1) block of -hessian is SPD when the adjacency graph is connected.
inline Eigen::VectorXd linear_solve(const SparseMatrix& hessian, const Eigen::VectorXd& rhs) {
  const auto n = hessian.rows();
  if (hessian.cols() != n || rhs.size() != n) throw Error(ErrorCode::InvalidArgument, "linear_solve size mismatch");
  Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
  if (n <= 1) return step;
  if (!detail::is_connected(hessian)) throw Error(ErrorCode::SingularSystem, "adjacency graph is disconnected");

  const SparseMatrix reduced = -hessian.bottomRightCorner(n - 1, n - 1);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(reduced);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "factorization failed");
  const Eigen::VectorXd x = ldlt.solve(-rhs.tail(n - 1));
  if (ldlt.info() != Eigen::Success || !x.allFinite()) throw Error(ErrorCode::SingularSystem, "solve failed");
  step.tail(n - 1) = x;
  return step;
}

struct ProjectionQuantities {
  double dist_sq = 0.0;
  std::vector<Point2> barycenters;
  std::vector<Point2> gradient;  // 2 (M_i - B_i), the L2 gradient of dist_sq on piecewise-constant maps
};

/// Transport cost sum_i int_{L_i} |x - M_i|^2 dx and the cell barycenters.
inline ProjectionQuantities projection_quantities(const OTSolution& solution, std::span<const Point2> sites) {
  const auto& diagram = solution.diagram;
  if (sites.size() != diagram.size()) throw Error(ErrorCode::InvalidArgument, "site count mismatch");
  ProjectionQuantities q;
  q.barycenters.resize(sites.size());
  q.gradient.resize(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (diagram.is_empty(i)) throw Error(ErrorCode::DegenerateProblem, "empty cell " + std::to_string(i));
    // The diagram stores wrapped sites; cells live around those.
    const Point2 site = diagram.sites[i];
    const auto m = compute_moments(diagram.cells[i], site);
    q.dist_sq += m.second_moment_about(site);
    q.barycenters[i] = m.barycenter;
    q.gradient[i] = 2.0 * (site - m.barycenter);
  }
  return q;
}

namespace detail {

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Weights whose Laguerre cells are all non-empty: the diagram equals the
// Voronoi diagram of the sites contracted towards an interior point, each
// contracted site lying inside the domain (in y only for periodic domains).
inline std::vector<double> contraction_weights(std::span<const Point2> sites, const Domain& domain) {
  const Point2 c = domain.centroid();
  const auto box = domain.bounds();
  double inner = std::numeric_limits<double>::infinity();
  double spread = 0.0;
  if (domain.periodic_x()) {
    inner = std::min(c.y - box.lo.y, box.hi.y - c.y);
    for (auto s : sites) spread = std::max(spread, std::abs(s.y - c.y));
  } else {
    const auto& b = domain.boundary();
    for (std::size_t k = 0; k < b.size(); ++k) {
      const Point2 a = b.vertex(k), e = b.vertex((k + 1) % b.size()) - a;
      inner = std::min(inner, std::abs(cross(e, c - a)) / norm(e));
    }
    for (auto s : sites) spread = std::max(spread, norm(s - c));
  }
  const double lambda = spread > 0.0 ? std::min(1.0, 0.5 * inner / spread) : 1.0;
  std::vector<double> w(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const Point2 d = domain.periodic_x() ? Point2{0.0, sites[i].y - c.y} : sites[i] - c;
    w[i] = -(1.0 - lambda) * norm2(d);
  }
  return w;
}

inline void gauge_fix(std::vector<double>& w) {
  const double w0 = w[0];
  for (double& x : w) x -= w0;
}

struct EmptyStart {};

inline OTSolution newton(const OTProblem& problem, std::vector<double> weights, const SolverOptions& options) {
  const auto& targets = problem.target_areas;
  const double min_target = *std::min_element(targets.begin(), targets.end());
  const double goal = options.tol * min_target;
  gauge_fix(weights);

  PowerDiagram diagram = build_power_diagram(problem.sites, weights, problem.domain);
  std::vector<double> r = residual(diagram, targets);
  const double initial_min = diagram.min_area();
  if (!(initial_min > 0.0)) throw EmptyStart{};
  const double floor_area = 0.5 * std::min(initial_min, min_target);
  double accepted_min = std::numeric_limits<double>::infinity();
  int iterations = 0;

  while (max_abs(r) > goal) {
    if (iterations >= options.max_iterations)
      throw Error(ErrorCode::MaxIterationsExceeded,
                  "no convergence after " + std::to_string(iterations) + " Newton iterations");
    const SparseMatrix h = assemble_hessian(diagram);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) rhs[static_cast<Eigen::Index>(i)] = -r[i];
    const Eigen::VectorXd step = linear_solve(h, rhs);

    const double norm_r = l2(r);
    double alpha = 1.0;
    for (;;) {
      std::vector<double> trial(weights.size());
      for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = weights[i] + alpha * step[static_cast<Eigen::Index>(i)];
      PowerDiagram next = build_power_diagram(problem.sites, trial, problem.domain);
      std::vector<double> next_r = residual(next, targets);
      if (next.min_area() >= floor_area && l2(next_r) <= (1.0 - 0.5 * alpha) * norm_r) {
        weights = std::move(trial);
        diagram = std::move(next);
        r = std::move(next_r);
        accepted_min = std::min(accepted_min, diagram.min_area());
        break;
      }
      alpha *= 0.5;
      if (alpha < options.min_step)
        throw Error(ErrorCode::NewtonStalled, "damping step fell below the minimum after " +
                                                  std::to_string(iterations) + " iterations");
    }
    ++iterations;
  }

  OTSolution sol;
  sol.weights = std::move(weights);
  sol.areas = diagram.areas;
  sol.diagram = std::move(diagram);
  sol.newton_iterations = iterations;
  sol.initial_min_area = initial_min;
  sol.min_accepted_area = iterations == 0 ? initial_min : accepted_min;
  const auto q = projection_quantities(sol, sol.diagram.sites);
  sol.barycenters = q.barycenters;
  sol.dist_sq = q.dist_sq;
  return sol;
}

}  // namespace detail

/// Finds weights psi (psi_0 = 0) such that every Laguerre cell has its
/// target area. Warm-starts from `initial_weights` when given.
inline OTSolution solve(const OTProblem& problem, std::optional<std::span<const double>> initial_weights = std::nullopt,
                        const SolverOptions& options = {}) {
  problem.validate();
  if (!(options.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  try {
    check_distinct_sites(problem.sites, problem.domain);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DuplicateSites) throw Error(ErrorCode::DegenerateProblem, e.what());
    throw;
  }
  const std::size_t n = problem.sites.size();
  if (initial_weights && initial_weights->size() != n)
    throw Error(ErrorCode::InvalidArgument, "initial weights length mismatch");

  auto attempt = [&](std::vector<double> start) -> std::optional<OTSolution> {
    try {
      return detail::newton(problem, std::move(start), options);
    } catch (const detail::EmptyStart&) {
      return std::nullopt;
    }
  };

  if (initial_weights) {
    try {
      if (auto sol = attempt({initial_weights->begin(), initial_weights->end()})) return *sol;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NewtonStalled) throw;
    }
  }
  if (auto sol = attempt(std::vector<double>(n, 0.0))) return *sol;
  if (auto sol = attempt(detail::contraction_weights(problem.sites, problem.domain))) return *sol;
  throw Error(ErrorCode::DegenerateProblem, "could not find starting weights with non-empty cells");
}

}  // namespace lagflow
