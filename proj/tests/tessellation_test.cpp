#include "lagflow/tessellation.hpp"

#include <gtest/gtest.h>

#include <cstring>

namespace lagflow {
namespace {

Domain unit_square() { return Domain::rectangle(-0.5, -0.5, 0.5, 0.5); }

TEST(Lloyd, SingleCellIsDomain) {
  const auto dom = Domain::rectangle(0, 0, 2, 1);
  const auto p = lloyd_partition(dom, 1, 3);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_NEAR(p.areas[0], 2.0, 1e-14);
  EXPECT_NEAR(p.centroids[0].x, 1.0, 1e-14);
  EXPECT_NEAR(p.centroids[0].y, 0.5, 1e-14);
  EXPECT_EQ(p.iterations, 1);
}

TEST(Lloyd, FourFoldSymmetricStartReachesQuadrants) {
  const std::vector<Point2> start{{0.1, 0.2}, {-0.2, 0.1}, {-0.1, -0.2}, {0.2, -0.1}};
  LloydOptions o;
  o.move_tol = 1e-10;
  o.max_iters = 500;
  const auto p = lloyd_relax(unit_square(), start, o);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(p.areas[i], 0.25, 1e-7 * 0.25);
    EXPECT_NEAR(std::abs(p.centroids[i].x), 0.25, 1e-8);
    EXPECT_NEAR(std::abs(p.centroids[i].y), 0.25, 1e-8);
  }
}

class LloydProperties : public ::testing::TestWithParam<std::size_t> {};

TEST_P(LloydProperties, EqualAreasAndMonotoneEnergy) {
  const auto dom = Domain::rectangle(-1, -3, 1, 3);
  const std::size_t n = GetParam();
  LloydOptions o;
  o.max_iters = 30;
  const auto p = lloyd_partition(dom, n, 7, o);
  double total = 0;
  for (double a : p.areas) {
    EXPECT_NEAR(a, dom.area() / n, 1e-7 * dom.area() / n);
    total += a;
  }
  EXPECT_NEAR(total, dom.area(), 1e-9 * dom.area());
  for (std::size_t k = 1; k < p.energy_history.size(); ++k)
    EXPECT_LE(p.energy_history[k], p.energy_history[k - 1] * (1 + 1e-9));
  for (std::size_t i = 0; i < n; ++i) EXPECT_TRUE(p.cells[i].contains(p.centroids[i], 1e-12));
}

INSTANTIATE_TEST_SUITE_P(Sizes, LloydProperties, ::testing::Values(2u, 17u, 200u));

TEST(Lloyd, PeriodicDomain) {
  const auto dom = Domain::periodic_rectangle(0, -0.5, 2, 0.5);
  LloydOptions o;
  o.max_iters = 20;
  const auto p = lloyd_partition(dom, 100, 4, o);
  for (double a : p.areas) EXPECT_NEAR(a, 0.02, 1e-7 * 0.02);
  for (auto c : p.centroids) {
    EXPECT_GE(c.x, 0.0);
    EXPECT_LT(c.x, 2.0);
  }
}

TEST(Lloyd, SameSeedIsBitIdentical) {
  const auto dom = unit_square();
  LloydOptions o;
  o.max_iters = 10;
  const auto a = lloyd_partition(dom, 64, 11, o);
  const auto b = lloyd_partition(dom, 64, 11, o);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.centroids[i], &b.centroids[i], sizeof(Point2)), 0);
    ASSERT_EQ(a.cells[i].size(), b.cells[i].size());
    for (std::size_t k = 0; k < a.cells[i].size(); ++k) EXPECT_EQ(a.cells[i].vertex(k), b.cells[i].vertex(k));
  }
}

TEST(Lloyd, RejectsBadArguments) {
  EXPECT_THROW(lloyd_partition(unit_square(), 0, 1), Error);
  LloydOptions o;
  o.max_iters = 0;
  EXPECT_THROW(lloyd_partition(unit_square(), 4, 1, o), Error);
}

TEST(Grid, SingleCell) {
  const auto p = grid_partition(unit_square(), 1, 1);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_NEAR(p.areas[0], 1.0, 1e-15);
  EXPECT_NEAR(p.h, std::sqrt(2.0), 1e-15);
}

TEST(Grid, ThirtyByThirty) {
  const auto p = grid_partition(unit_square(), 30, 30);
  ASSERT_EQ(p.size(), 900u);
  double total = 0;
  for (double a : p.areas) {
    EXPECT_NEAR(a, 1.0 / 900, 1e-15);
    total += a;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(p.h, std::sqrt(2.0) / 30, 1e-15);
  EXPECT_NEAR(p.centroids[0].x, -29.0 / 60, 1e-15);
  EXPECT_NEAR(p.centroids[0].y, -29.0 / 60, 1e-15);
}

TEST(Grid, TwoUnitSquares) {
  const auto p = grid_partition(Domain::rectangle(0, 0, 2, 1), 2, 1);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p.areas[0], 1.0, 1e-15);
  EXPECT_NEAR(p.areas[1], 1.0, 1e-15);
  EXPECT_NEAR(p.centroids[1].x, 1.5, 1e-15);
}

TEST(Grid, MeshSizeScalesLikeInverseSqrtN) {
  for (std::size_t k : {10u, 20u, 40u}) {
    const auto p = grid_partition(unit_square(), k, k);
    EXPECT_LE(p.h, 1.5 / std::sqrt(static_cast<double>(k * k)));
  }
}

TEST(Grid, NonRectangleRejected) {
  const Domain tri(ConvexPolygon({{0, 0}, {1, 0}, {0, 1}}));
  try {
    grid_partition(tri, 2, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotRectangular);
  }
}

}  // namespace
}  // namespace lagflow
