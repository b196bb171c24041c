#pragma once

// Fixed equal-area partitions of the domain: Lloyd-type fixed point on
// equal-area Laguerre cells, or a regular grid of rectangles.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lagflow/geometry.hpp"
#include "lagflow/ot_solver.hpp"

namespace lagflow {

struct Partition {
  std::vector<ConvexPolygon> cells;
  std::vector<Point2> centroids;
  std::vector<double> areas;
  double h = 0.0;  // max cell diameter

  // Lloyd bookkeeping (empty for grid partitions)
  int iterations = 0;
  std::vector<double> energy_history;  // sum_i int_{cell_i} |x - C_i|^2 per iteration

  std::size_t size() const { return cells.size(); }
};

namespace detail {

inline double max_cell_diameter(const std::vector<ConvexPolygon>& cells) {
  double h = 0.0;
  for (const auto& c : cells) h = std::max(h, c.diameter());
  return h;
}

}  // namespace detail

struct LloydOptions {
  int max_iters = 100;
  double move_tol = 1e-4;  // relative to diam(domain)
  SolverOptions solver{};
};

/// Uniform rejection sample of `n` points in the domain.
inline std::vector<Point2> sample_uniform(const Domain& domain, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto box = domain.bounds();
  std::uniform_real_distribution<double> ux(box.lo.x, box.hi.x), uy(box.lo.y, box.hi.y);
  std::vector<Point2> pts;
  pts.reserve(n);
  while (pts.size() < n) {
    const Point2 p{ux(rng), uy(rng)};
    if (domain.boundary().contains(p)) pts.push_back(p);
  }
  return pts;
}

/// Equal-area Laguerre partition by the fixed point C <- bary(Lag(C, psi)),
/// psi solving the equal-area transport problem at C, from given centers.
inline Partition lloyd_relax(const Domain& domain, std::vector<Point2> centers, const LloydOptions& options = {}) {
  const std::size_t n = centers.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "partition needs at least one cell");
  if (options.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");

  std::vector<double> weights;
  Partition part;
  const double stop = options.move_tol * domain.diameter();
  for (int it = 0; it < options.max_iters; ++it) {
    auto problem = OTProblem::uniform(centers, domain);
    const OTSolution sol = weights.empty() ? solve(problem, std::nullopt, options.solver)
                                           : solve(problem, std::span<const double>(weights), options.solver);
    weights = sol.weights;
    part.energy_history.push_back(sol.dist_sq);

    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      moved = std::max(moved, norm(domain.displacement(sol.diagram.sites[i], sol.barycenters[i])));
      centers[i] = domain.wrap(sol.barycenters[i]);
    }
    part.cells = sol.diagram.cells;
    part.areas = sol.areas;
    part.centroids = sol.barycenters;
    if (moved <= stop) {
      // this solve only confirmed the fixed point
      part.iterations = std::max(it, 1);
      break;
    }
    part.iterations = it + 1;
  }
  for (auto& c : part.centroids) c = domain.wrap(c);
  part.h = detail::max_cell_diameter(part.cells);
  return part;
}

/// Lloyd partition started from a seeded uniform sample.
inline Partition lloyd_partition(const Domain& domain, std::size_t n, std::uint64_t seed,
                                 const LloydOptions& options = {}) {
  if (n == 0) throw Error(ErrorCode::EmptyInput, "partition needs at least one cell");
  return lloyd_relax(domain, sample_uniform(domain, n, seed), options);
}

/// nx x ny congruent rectangles on an axis-aligned rectangular domain.
inline Partition grid_partition(const Domain& domain, std::size_t nx, std::size_t ny) {
  if (!domain.is_axis_rectangle()) throw Error(ErrorCode::NotRectangular, "grid partition needs a rectangle");
  if (nx == 0 || ny == 0) throw Error(ErrorCode::EmptyInput, "grid must have at least one cell");
  const auto box = domain.bounds();
  const double dx = box.width() / static_cast<double>(nx), dy = box.height() / static_cast<double>(ny);
  Partition part;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const double x0 = box.lo.x + static_cast<double>(i) * dx, y0 = box.lo.y + static_cast<double>(j) * dy;
      part.cells.emplace_back(std::vector<Point2>{{x0, y0}, {x0 + dx, y0}, {x0 + dx, y0 + dy}, {x0, y0 + dy}});
      part.centroids.push_back({x0 + 0.5 * dx, y0 + 0.5 * dy});
      part.areas.push_back(dx * dy);
    }
  }
  part.h = std::hypot(dx, dy);
  return part;
}

}  // namespace lagflow
