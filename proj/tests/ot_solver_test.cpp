#include "lagflow/ot_solver.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"

namespace lagflow {
namespace {

Domain unit_square() { return Domain::rectangle(-0.5, -0.5, 0.5, 0.5); }

std::vector<Point2> random_sites(const Domain& d, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto box = d.bounds();
  std::uniform_real_distribution<double> ux(box.lo.x, box.hi.x), uy(box.lo.y, box.hi.y);
  std::vector<Point2> pts;
  while (pts.size() < n) {
    Point2 p{ux(rng), uy(rng)};
    if (d.boundary().contains(p)) pts.push_back(p);
  }
  return pts;
}

SolverOptions tight() {
  SolverOptions o;
  o.tol = 1e-12;
  return o;
}

TEST(GridAssignmentOracle, MatchesEnumerationOnTinyInstance) {
  // 3x3 points, 3 sinks of capacity 3: enumerate all 1680 balanced assignments.
  const std::vector<Point2> sinks{{0.1, 0.8}, {0.7, 0.3}, {0.4, 0.45}};
  BoundingBox box;
  box.extend({0, 0});
  box.extend({1, 1});
  const auto result = oracle::grid_assignment(sinks, box, 3);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> a(9);
  std::function<void(int, std::array<int, 3>)> rec = [&](int p, std::array<int, 3> cnt) {
    if (p == 9) {
      double c = 0;
      for (int q = 0; q < 9; ++q) c += norm2(result.sources[q] - sinks[a[q]]) / 9.0;
      best = std::min(best, c);
      return;
    }
    for (int k = 0; k < 3; ++k) {
      if (cnt[k] == 3) continue;
      a[p] = k;
      auto next = cnt;
      ++next[k];
      rec(p + 1, next);
    }
  };
  rec(0, {0, 0, 0});
  EXPECT_NEAR(result.cost, best, 1e-14);
}

TEST(Residual, SingleSiteIsZero) {
  std::vector<Point2> s{{0.2, 0.1}};
  std::vector<double> w{0};
  const auto d = build_power_diagram(s, w, unit_square());
  const std::vector<double> t{1.0};
  EXPECT_NEAR(residual(d, t)[0], 0.0, 1e-15);
}

TEST(Residual, TwoSiteAsymmetricTargets) {
  std::vector<Point2> s{{-0.25, 0}, {0.25, 0}};
  std::vector<double> w{0, 0};
  const auto d = build_power_diagram(s, w, unit_square());
  const std::vector<double> t{0.6, 0.4};
  const auto r = residual(d, t);
  EXPECT_NEAR(r[0], -0.1, 1e-15);
  EXPECT_NEAR(r[1], 0.1, 1e-15);
}

TEST(Residual, SumsToZeroOnPartitions) {
  const auto dom = Domain::rectangle(0, 0, 2, 1);
  const auto s = random_sites(dom, 80, 3);
  std::vector<double> w(s.size());
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 0.01);
  for (auto& x : w) x = u(rng);
  const auto d = build_power_diagram(s, w, dom);
  const std::vector<double> t(s.size(), dom.area() / s.size());
  const auto r = residual(d, t);
  EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 0.0, 1e-9 * dom.area());
}

TEST(Hessian, SingleSiteIsZero) {
  std::vector<Point2> s{{0, 0}};
  std::vector<double> w{0};
  const auto h = assemble_hessian(build_power_diagram(s, w, unit_square()));
  ASSERT_EQ(h.rows(), 1);
  EXPECT_EQ(Eigen::MatrixXd(h)(0, 0), 0.0);
}

TEST(Hessian, TwoSiteSymmetric) {
  std::vector<Point2> s{{-0.25, 0}, {0.25, 0}};
  std::vector<double> w{0, 0};
  const auto d = build_power_diagram(s, w, unit_square());
  const Eigen::MatrixXd h(assemble_hessian(d));
  // edge length and site distance read from the diagram
  const double expected = d.edge_length(0, 1) / (2.0 * norm(s[0] - s[1]));
  EXPECT_NEAR(expected, 1.0, 1e-15);
  EXPECT_NEAR(h(0, 1), expected, 1e-15);
  EXPECT_NEAR(h(1, 0), expected, 1e-15);
  EXPECT_NEAR(h(0, 0), -expected, 1e-15);
}

TEST(Hessian, LaplacianStructureAndFiniteDifferences) {
  const auto dom = unit_square();
  const auto s = random_sites(dom, 50, 9);
  std::vector<double> w(s.size(), 0.0);
  const auto d = build_power_diagram(s, w, dom);
  const Eigen::MatrixXd h(assemble_hessian(d));
  EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  for (int i = 0; i < h.rows(); ++i) {
    EXPECT_NEAR(h.row(i).sum(), 0.0, 1e-12);
    double off = 0;
    for (int j = 0; j < h.cols(); ++j)
      if (j != i) {
        EXPECT_GE(h(i, j), 0.0);
        off += h(i, j);
      }
    EXPECT_NEAR(-h(i, i), off, 1e-12);
  }
  // column j against central differences of the areas in psi_j
  for (int j : {0, 7, 31}) {
    const double eps = 1e-7;
    auto wp = w, wm = w;
    wp[j] += eps;
    wm[j] -= eps;
    const auto ap = build_power_diagram(s, wp, dom).areas;
    const auto am = build_power_diagram(s, wm, dom).areas;
    for (int i = 0; i < h.rows(); ++i) EXPECT_NEAR((ap[i] - am[i]) / (2 * eps), h(i, j), 1e-6);
  }
}

TEST(LinearSolve, ZeroRhsGivesZeroStep) {
  std::vector<Point2> s{{-0.25, 0}, {0.25, 0}, {0, 0.3}};
  std::vector<double> w(3, 0.0);
  const auto h = assemble_hessian(build_power_diagram(s, w, unit_square()));
  const auto step = linear_solve(h, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(step.norm(), 0.0);
}

TEST(LinearSolve, TwoByTwoPinned) {
  Eigen::MatrixXd dense(2, 2);
  dense << -1, 1, 1, -1;
  const SparseMatrix h = dense.sparseView();
  Eigen::VectorXd rhs(2);
  rhs << -0.1, 0.1;
  const auto step = linear_solve(h, rhs);
  EXPECT_EQ(step[0], 0.0);
  EXPECT_NEAR(step[1], -0.1, 1e-15);
  // Newton direction from the two-site residual (-0.1, 0.1) at psi = 0 recovers psi = (0, 0.1)
  const auto newton = linear_solve(h, -rhs);
  EXPECT_NEAR(newton[1], 0.1, 1e-15);
}

TEST(LinearSolve, SolvesRandomConnectedSystems) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto dom = unit_square();
    const auto s = random_sites(dom, 120, seed);
    std::vector<double> w(s.size(), 0.0);
    const auto h = assemble_hessian(build_power_diagram(s, w, dom));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXd rhs(h.rows());
    for (int i = 0; i < rhs.size(); ++i) rhs[i] = g(rng);
    rhs.array() -= rhs.mean();
    const auto step = linear_solve(h, rhs);
    EXPECT_EQ(step[0], 0.0);
    EXPECT_LE((h * step - rhs).norm(), 1e-10 * rhs.norm());
  }
}

TEST(LinearSolve, DisconnectedGraphIsSingular) {
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(3, 3);
  dense << -1, 1, 0, 1, -1, 0, 0, 0, 0;
  try {
    linear_solve(dense.sparseView(), Eigen::VectorXd::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularSystem);
  }
}

TEST(Solve, SingleSiteNeedsNoIterations) {
  const auto sol = solve(OTProblem::uniform({{0.1, 0.2}}, unit_square()));
  ASSERT_EQ(sol.weights.size(), 1u);
  EXPECT_EQ(sol.weights[0], 0.0);
  EXPECT_EQ(sol.newton_iterations, 0);
  EXPECT_NEAR(sol.areas[0], 1.0, 1e-15);
}

TEST(Solve, MirrorSymmetricSitesHaveEqualWeights) {
  const auto sol = solve(OTProblem::uniform({{-0.25, 0.1}, {0.25, 0.1}}, unit_square()));
  EXPECT_EQ(sol.weights[0], 0.0);
  EXPECT_NEAR(sol.weights[1], 0.0, 1e-14);
}

TEST(Solve, TwoSiteAnalyticWeights) {
  OTProblem p{{{-0.25, 0}, {0.25, 0}}, {0.6, 0.4}, unit_square()};
  const auto sol = solve(p, std::nullopt, tight());
  EXPECT_EQ(sol.weights[0], 0.0);
  EXPECT_NEAR(sol.weights[1], 0.1, 1e-8);
}

TEST(Solve, MatchesDenseAssignmentOracle) {
  const auto dom = Domain::rectangle(0, 0, 1, 1);
  for (std::uint64_t seed : {21u, 22u}) {
    const auto sites = random_sites(dom, 20, seed);
    const auto sol = solve(OTProblem::uniform(sites, dom), std::nullopt, tight());
    const auto lp = oracle::grid_assignment(sites, dom.bounds(), 200);
    const double budget = 2.0 * (std::sqrt(2.0) / 200.0) * std::sqrt(sol.dist_sq);
    EXPECT_NEAR(sol.dist_sq, lp.cost, budget);
  }
}

TEST(Solve, ResidualWithinToleranceAndCellsNonEmpty) {
  const auto dom = Domain::rectangle(0, 0, 2, 1);
  const auto sites = random_sites(dom, 300, 8);
  auto p = OTProblem::uniform(sites, dom);
  const auto sol = solve(p);
  const double target = dom.area() / 300;
  for (double a : sol.areas) {
    EXPECT_GT(a, 0.0);
    EXPECT_LE(std::abs(a - target), 1e-7 * target);
  }
  EXPECT_EQ(sol.weights[0], 0.0);
  EXPECT_GE(sol.dist_sq, 0.0);
  // damping safeguard
  EXPECT_GE(sol.min_accepted_area, 0.5 * std::min(sol.initial_min_area, target) - 1e-18);
}

TEST(Solve, RecoversFromSitesOutsideDomain) {
  // Far outlier: its Voronoi cell misses the domain entirely at psi = 0.
  auto sites = random_sites(unit_square(), 30, 12);
  sites.push_back({3.0, 2.5});
  const auto sol = solve(OTProblem::uniform(sites, unit_square()));
  for (double a : sol.areas) EXPECT_NEAR(a, 1.0 / 31, 1e-7 / 31);
}

TEST(Solve, PeriodicDomain) {
  const auto dom = Domain::periodic_rectangle(0, -0.5, 2, 0.5);
  const auto sites = random_sites(dom, 100, 31);
  const auto sol = solve(OTProblem::uniform(sites, dom));
  for (double a : sol.areas) EXPECT_NEAR(a, 0.02, 1e-7 * 0.02);
}

TEST(Solve, DuplicateSitesAreDegenerate) {
  try {
    solve(OTProblem::uniform({{0.1, 0.1}, {0.1, 0.1}}, unit_square()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateProblem);
  }
}

TEST(Solve, IterationCapReported) {
  SolverOptions o;
  o.max_iterations = 1;
  o.tol = 1e-14;
  try {
    solve(OTProblem::uniform(random_sites(unit_square(), 200, 5), unit_square()), std::nullopt, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaxIterationsExceeded);
  }
}

TEST(Solve, RejectsInvalidProblems) {
  OTProblem bad{{{0, 0}, {0.2, 0}}, {0.5, 0.4}, unit_square()};
  EXPECT_THROW(solve(bad), Error);
  OTProblem wrong_len{{{0, 0}}, {0.5, 0.5}, unit_square()};
  EXPECT_THROW(solve(wrong_len), Error);
  std::vector<double> init{0.0};
  EXPECT_THROW(solve(OTProblem::uniform({{0, 0}, {0.2, 0}}, unit_square()), std::span<const double>(init)), Error);
}

TEST(Solve, WarmStartNeedsNoMoreIterations) {
  const auto dom = unit_square();
  auto sites = random_sites(dom, 200, 17);
  const auto first = solve(OTProblem::uniform(sites, dom));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : sites) p += 0.01 * dom.diameter() / std::sqrt(2.0) * Point2{u(rng), u(rng)};
  const auto cold = solve(OTProblem::uniform(sites, dom));
  const auto warm = solve(OTProblem::uniform(sites, dom), std::span<const double>(first.weights));
  EXPECT_LE(warm.newton_iterations, cold.newton_iterations);
}

TEST(Projection, SingleSiteAtCentroid) {
  const auto sol = solve(OTProblem::uniform({{0, 0}}, unit_square()));
  const std::vector<Point2> s{{0, 0}};
  const auto q = projection_quantities(sol, s);
  EXPECT_NEAR(q.dist_sq, 1.0 / 6.0, 1e-15);
  EXPECT_EQ(q.gradient[0].x, 0.0);
  EXPECT_EQ(q.gradient[0].y, 0.0);
}

TEST(Projection, FourQuadrantFixedPoint) {
  const std::vector<Point2> s{{-0.25, -0.25}, {0.25, -0.25}, {-0.25, 0.25}, {0.25, 0.25}};
  const auto sol = solve(OTProblem::uniform(s, unit_square()));
  const auto q = projection_quantities(sol, s);
  EXPECT_NEAR(q.dist_sq, 1.0 / 24.0, 1e-15);
  for (auto g : q.gradient) EXPECT_LE(norm(g), 1e-15);
}

class GradientCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCheck, MatchesFiniteDifferences) {
  const auto dom = unit_square();
  const std::size_t n = GetParam();
  const auto sites = random_sites(dom, n, 40 + n);
  const auto sol = solve(OTProblem::uniform(sites, dom), std::nullopt, tight());
  const auto q = projection_quantities(sol, sites);
  const double h = 1e-5 * dom.diameter();
  const double mass = dom.area() / n;
  double err2 = 0, ref2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      auto plus = sites, minus = sites;
      (axis == 0 ? plus[i].x : plus[i].y) += h;
      (axis == 0 ? minus[i].x : minus[i].y) -= h;
      const double fp = solve(OTProblem::uniform(plus, dom), std::span<const double>(sol.weights), tight()).dist_sq;
      const double fm = solve(OTProblem::uniform(minus, dom), std::span<const double>(sol.weights), tight()).dist_sq;
      // d/dM_i of the cost is the L2 gradient times the particle mass
      const double fd = (fp - fm) / (2 * h) / mass;
      const double g = axis == 0 ? q.gradient[i].x : q.gradient[i].y;
      err2 += (fd - g) * (fd - g);
      ref2 += g * g;
    }
  }
  EXPECT_LE(std::sqrt(err2 / ref2), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Sizes, GradientCheck, ::testing::Values(5u, 20u));

TEST(Projection, DistanceIsOneSemiconcave) {
  // |m|^2 - dist_sq(m) must be midpoint convex along random lines (mass-weighted norm).
  const auto dom = unit_square();
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  for (std::size_t n : {5u, 20u}) {
    const double mass = dom.area() / n;
    auto base = random_sites(dom, n, 70 + n);
    auto convex_part = [&](const std::vector<Point2>& m) {
      double sq = 0;
      for (auto p : m) sq += mass * norm2(p);
      return sq - solve(OTProblem::uniform(m, dom), std::nullopt, tight()).dist_sq;
    };
    for (int line = 0; line < 5; ++line) {
      std::vector<Point2> dir(n);
      for (auto& d : dir) d = {g(rng), g(rng)};
      const double s = 0.02;
      auto plus = base, minus = base;
      for (std::size_t i = 0; i < n; ++i) {
        plus[i] += s * dir[i];
        minus[i] -= s * dir[i];
      }
      const double mid = convex_part(base);
      EXPECT_GE(convex_part(plus) + convex_part(minus) - 2 * mid, -1e-10);
    }
  }
}

}  // namespace
}  // namespace lagflow
