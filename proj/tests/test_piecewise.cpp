#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "test_support.hpp"
#include "trunklio/piecewise.hpp"

namespace trunklio {
namespace {

using testing::sample_curved_trunk;
using testing::sample_cylinder;

PointList curved_fixture(std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  return sample_curved_trunk(Point3(0, 0, 0), 10.0, 0.2, 4.0, 2000, 0.005, rng);
}

double mean_abs_residual(const PointList& pts, const TreeModel& tree) {
  double s = 0.0;
  for (const auto& p : pts) s += std::abs(cylinder_surface_residual(p, find_cylinder_in_tree(p, tree)));
  return s / static_cast<double>(pts.size());
}

std::size_t leaf_count(const TreeModel& t) { return leaves(t).size(); }

// Recursively checks that children partition the parent's points.
void check_partition(const TreeModel& tree, int node, const PointList& pts) {
  const CylNode& n = tree.nodes[node];
  EXPECT_EQ(n.point_count, pts.size());
  if (n.is_leaf()) {
    EXPECT_TRUE(n.cylinder.has_value());
    return;
  }
  PointList lo, hi;
  for (const auto& p : pts) (n.split_axis.dot(p) <= n.split_coord ? lo : hi).push_back(p);
  EXPECT_EQ(lo.size() + hi.size(), pts.size());
  check_partition(tree, n.low, lo);
  check_partition(tree, n.high, hi);
}

TEST(DividePointCloud, MedianOfFour) {
  PointList pts{{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}};
  const auto d = divide_point_cloud(pts, Vec3::UnitZ());
  ASSERT_EQ(d.low.size(), 2u);
  ASSERT_EQ(d.high.size(), 2u);
  EXPECT_DOUBLE_EQ(d.split_coord, 2.5);
  EXPECT_EQ(d.low[0].z(), 1.0);
  EXPECT_EQ(d.low[1].z(), 2.0);
}

TEST(DividePointCloud, TiesGoLow) {
  PointList pts{{0, 0, 0}, {1, 0, 0}, {0, 0, 1}};
  const auto d = divide_point_cloud(pts, Vec3::UnitZ());
  EXPECT_EQ(d.low.size(), 2u);
  ASSERT_EQ(d.high.size(), 1u);
  EXPECT_EQ(d.high[0].z(), 1.0);
}

TEST(DividePointCloud, BalancedOnRandomCloud) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    PointList pts;
    const int count = 2 + trial * 7;
    for (int i = 0; i < count; ++i) pts.emplace_back(n(rng), n(rng), n(rng));
    const Vec3 axis = testing::random_unit(rng);
    const auto d = divide_point_cloud(pts, axis);
    EXPECT_FALSE(d.low.empty());
    EXPECT_FALSE(d.high.empty());
    EXPECT_LE(std::abs(static_cast<long>(d.low.size()) - static_cast<long>(d.high.size())), 1);
    for (const auto& p : d.low) EXPECT_LE(axis.dot(p), d.split_coord);
    for (const auto& p : d.high) EXPECT_GT(axis.dot(p), d.split_coord);
  }
}

TEST(DividePointCloud, AllEqualThrows) {
  PointList pts{{1, 0, 2}, {0, 1, 2}, {3, 3, 2}};
  EXPECT_THROW(divide_point_cloud(pts, Vec3::UnitZ()), DegenerateInput);
  PointList one{{0, 0, 0}};
  EXPECT_THROW(divide_point_cloud(one, Vec3::UnitZ()), DegenerateInput);
}

TEST(BuildTree, StraightCylinderIsSingleLeaf) {
  std::mt19937_64 rng(5);
  const auto pts = sample_cylinder(Vec3::UnitZ(), Point3(1, 2, 0), 0.25, 4.0, 500, 0.0, rng);
  const TreeModel tree = build_tree(pts, {});
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_TRUE(tree.root().is_leaf());
  EXPECT_EQ(tree.root().depth, 1);
  EXPECT_EQ(tree.point_count, 500u);
}

TEST(BuildTree, CurvedTrunkSplitsAndReducesResidual) {
  const PointList pts = curved_fixture();
  PiecewiseParams p3;
  const TreeModel deep = build_tree(pts, p3);
  EXPECT_GE(leaf_count(deep), 2u);
  EXPECT_LE(max_depth(deep), 3);

  // Oracle: residuals of every point against a single best-effort cylinder.
  RansacParams loose;
  loose.min_inlier_frac = 0.0;
  const Cylinder single = fit_cylinder(pts, loose);
  double single_mean = 0.0;
  for (const auto& p : pts) single_mean += std::abs(cylinder_surface_residual(p, single));
  single_mean /= static_cast<double>(pts.size());

  EXPECT_LT(mean_abs_residual(pts, deep), single_mean);
}

TEST(BuildTree, DepthOneIsSingleLeaf) {
  const PointList pts = curved_fixture();
  PiecewiseParams p1;
  p1.d_max = 1;
  const TreeModel tree = build_tree(pts, p1);
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_TRUE(tree.root().cylinder.has_value());
}

TEST(BuildTree, DeeperIsBetterOnCurvedTrunk) {
  const PointList pts = curved_fixture();
  PiecewiseParams p1, p3;
  p1.d_max = 1;
  p3.d_max = 3;
  EXPECT_LT(mean_abs_residual(pts, build_tree(pts, p3)), mean_abs_residual(pts, build_tree(pts, p1)));
}

TEST(BuildTree, StructuralInvariants) {
  for (int d = 1; d <= 4; ++d) {
    const PointList pts = curved_fixture(static_cast<std::uint64_t>(20 + d));
    PiecewiseParams p;
    p.d_max = d;
    const TreeModel tree = build_tree(pts, p);
    EXPECT_LE(leaf_count(tree), std::size_t{1} << (d - 1));
    EXPECT_LE(max_depth(tree), d);
    check_partition(tree, 0, pts);
    for (const auto& n : tree.nodes) {
      if (!n.is_leaf()) {
        EXPECT_GE(n.low, 0);
        EXPECT_GE(n.high, 0);
      }
    }
  }
}

TEST(BuildTree, MinLeafRmsNonIncreasingWithDepth) {
  const PointList pts = curved_fixture(8);
  double prev = std::numeric_limits<double>::infinity();
  for (int d = 1; d <= 4; ++d) {
    PiecewiseParams p;
    p.d_max = d;
    const TreeModel tree = build_tree(pts, p);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& leaf : leaves(tree)) best = std::min(best, tree.nodes[leaf.node].cylinder->fit_rms);
    EXPECT_LE(best, prev) << "d_max " << d;
    prev = best;
  }
}

TEST(BuildTree, InfiniteThresholdMatchesSingleFit) {
  std::mt19937_64 rng(9);
  const auto pts = sample_cylinder(testing::random_unit(rng), Point3(0.5, -1, 2), 0.3, 3.0, 400, 0.01, rng);
  PiecewiseParams p;
  p.eps_max = std::numeric_limits<double>::infinity();
  const TreeModel tree = build_tree(pts, p);
  ASSERT_EQ(tree.nodes.size(), 1u);
  const Cylinder a = *tree.root().cylinder;
  const Cylinder b = fit_cylinder(pts, p.ransac);
  EXPECT_EQ(a.axis_dir, b.axis_dir);
  EXPECT_EQ(a.axis_point, b.axis_point);
  EXPECT_EQ(a.radius, b.radius);
  EXPECT_EQ(a.fit_rms, b.fit_rms);
}

TEST(BuildTree, Deterministic) {
  const PointList pts = curved_fixture();
  const TreeModel a = build_tree(pts, {});
  const TreeModel b = build_tree(pts, {});
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    ASSERT_EQ(a.nodes[i].cylinder.has_value(), b.nodes[i].cylinder.has_value());
    if (a.nodes[i].cylinder) {
      EXPECT_EQ(a.nodes[i].cylinder->axis_point, b.nodes[i].cylinder->axis_point);
      EXPECT_EQ(a.nodes[i].cylinder->radius, b.nodes[i].cylinder->radius);
    }
    EXPECT_EQ(a.nodes[i].split_coord, b.nodes[i].split_coord);
  }
}

TEST(BuildTree, SmallChildrenInheritParent) {
  // 11 points: one half ends up with 5 points and must reuse the parent fit.
  PointList pts;
  for (int i = 0; i < 11; ++i) {
    const double a = 2.0 * M_PI * i / 11.0;
    // Alternate radius so the single fit is over threshold.
    const double r = (i % 2 == 0) ? 0.2 : 0.3;
    pts.emplace_back(r * std::cos(a), r * std::sin(a), 0.4 * i);
  }
  PiecewiseParams p;
  p.ransac.min_inlier_frac = 0.0;
  const TreeModel tree = build_tree(pts, p);
  for (const auto& leaf : leaves(tree)) EXPECT_TRUE(tree.nodes[leaf.node].cylinder.has_value());
  check_partition(tree, 0, pts);
}

TEST(BuildTree, UnfittableRootThrows) {
  PointList pts{{0, 0, 0}, {0, 0, 1}, {0, 0, 2}};
  EXPECT_THROW(build_tree(pts, {}), DegenerateInput);
  EXPECT_THROW(build_tree(PointList{}, {}), DegenerateInput);
}

TEST(FindCylinder, SingleLeaf) {
  std::mt19937_64 rng(5);
  const auto pts = sample_cylinder(Vec3::UnitZ(), Point3(0, 0, 0), 0.25, 4.0, 300, 0.0, rng);
  const TreeModel tree = build_tree(pts, {});
  const Cylinder& c = find_cylinder_in_tree(Point3(10, -3, 100), tree);
  EXPECT_EQ(&c, &*tree.root().cylinder);
}

TEST(FindCylinder, TwoLeafDirectComparison) {
  TreeModel tree;
  tree.nodes.resize(3);
  tree.nodes[0].low = 1;
  tree.nodes[0].high = 2;
  tree.nodes[0].split_axis = Vec3::UnitZ();
  tree.nodes[0].split_coord = 2.5;
  Cylinder lo, hi;
  lo.radius = 0.1;
  hi.radius = 0.2;
  tree.nodes[1].cylinder = lo;
  tree.nodes[2].cylinder = hi;
  EXPECT_EQ(find_cylinder_in_tree(Point3(0.3, 0, 1.0), tree).radius, 0.1);
  EXPECT_EQ(find_cylinder_in_tree(Point3(0.3, 0, 2.5), tree).radius, 0.1);
  EXPECT_EQ(find_cylinder_in_tree(Point3(0.3, 0, 2.6), tree).radius, 0.2);
}

TEST(FindCylinder, MatchesExhaustiveLeafSearch) {
  PiecewiseParams p;
  for (std::uint64_t seed : {3u, 4u, 5u, 6u, 7u}) {
    const PointList pts = curved_fixture(seed);
    const TreeModel tree = build_tree(pts, p);
    ASSERT_GE(leaf_count(tree), 2u);
    std::mt19937_64 rng(seed + 100);
    const PointList queries = testing::sample_on_leaves(tree, 1000, 0.002, rng);
    int agree = 0;
    for (const auto& q : queries) agree += find_leaf_index(q, tree) == testing::exhaustive_leaf(q, tree);
    EXPECT_GE(agree, 990) << "seed " << seed;
  }
}

TEST(Leaves, PathsFollowLowHighOrder) {
  const TreeModel tree = build_tree(curved_fixture(), {});
  const auto all = leaves(tree);
  ASSERT_FALSE(all.empty());
  for (const auto& l : all) {
    EXPECT_EQ(l.path.front(), 'R');
    EXPECT_EQ(static_cast<int>(l.path.size()), tree.nodes[l.node].depth);
  }
}

}  // namespace
}  // namespace trunklio
