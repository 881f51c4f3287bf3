#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "trunklio/geometry.hpp"

namespace trunklio {

// A node of the piecewise-cylinder tree. Nodes live in a flat arena owned by
// TreeModel; children are indices into it (-1 when absent).
struct CylNode {
  std::optional<Cylinder> cylinder;
  int low = -1;
  int high = -1;
  int depth = 1;
  Vec3 split_axis = Vec3::UnitZ();  // axis used to project at split time
  double split_coord = 0.0;
  std::size_t point_count = 0;

  bool is_leaf() const { return low < 0 && high < 0; }
};

struct TreeModel {
  std::vector<CylNode> nodes;  // nodes[0] is the root
  Point3 centroid = Point3::Zero();
  std::size_t point_count = 0;

  const CylNode& root() const { return nodes.front(); }
  bool empty() const { return nodes.empty(); }
};

struct PiecewiseParams {
  double eps_max = 0.02;
  int d_max = 3;
  RansacParams ransac;
};

struct DividedCloud {
  PointList low;
  PointList high;
  double split_coord = 0.0;
};

/// Median split along `axis`. Projections equal to the median go to the low
/// half; both halves are always non-empty.
inline DividedCloud divide_point_cloud(std::span<const Point3> points, const Vec3& axis) {
  if (points.size() < 2) throw DegenerateInput("divide_point_cloud: fewer than 2 points");
  std::vector<double> proj(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) proj[i] = axis.dot(points[i]);
  std::vector<double> sorted = proj;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw DegenerateInput("divide_point_cloud: all projections equal");

  const std::size_t n = sorted.size();
  double split = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  if (split >= sorted.back()) {
    // Ties at the top would leave the high half empty; move the split down to
    // the largest value strictly below the maximum.
    auto it = std::lower_bound(sorted.begin(), sorted.end(), sorted.back());
    split = *(it - 1);
  }
  DividedCloud out;
  out.split_coord = split;
  for (std::size_t i = 0; i < points.size(); ++i) {
    (proj[i] <= split ? out.low : out.high).push_back(points[i]);
  }
  return out;
}

namespace detail {

inline std::optional<Cylinder> try_fit(std::span<const Point3> points, const RansacParams& params) {
  if (points.size() < kMinCylinderPoints) return std::nullopt;
  try {
    return fit_cylinder(points, params);
  } catch (const DegenerateInput&) {
  } catch (const NoConsensus&) {
  }
  return std::nullopt;
}

// Fit without the consensus-fraction gate; the best cylinder RANSAC can find.
inline std::optional<Cylinder> best_effort_fit(std::span<const Point3> points, RansacParams params) {
  params.min_inlier_frac = 0.0;
  return try_fit(points, params);
}

inline int build_node(TreeModel& tree, std::span<const Point3> points, int depth, const PiecewiseParams& params,
                      const std::optional<Cylinder>& inherited);

inline int build_child(TreeModel& tree, std::span<const Point3> points, int depth, const PiecewiseParams& params,
                       const Cylinder& parent) {
  if (points.size() < kMinCylinderPoints) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[index].depth = depth;
    tree.nodes[index].point_count = points.size();
    tree.nodes[index].cylinder = parent;
    return index;
  }
  return build_node(tree, points, depth, params, parent);
}

inline int build_node(TreeModel& tree, std::span<const Point3> points, int depth, const PiecewiseParams& params,
                      const std::optional<Cylinder>& inherited) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[index].depth = depth;
  tree.nodes[index].point_count = points.size();

  // A failed fit (no consensus on a strongly bent trunk) counts as an
  // over-threshold residual: split if depth allows.
  const std::optional<Cylinder> fit = try_fit(points, params.ransac);
  if (fit && (fit->fit_rms < params.eps_max || depth >= params.d_max)) {
    tree.nodes[index].cylinder = fit;
    return index;
  }
  auto fallback = [&]() -> std::optional<Cylinder> {
    if (fit) return fit;
    if (auto c = best_effort_fit(points, params.ransac)) return c;
    return inherited;
  };
  if (depth >= params.d_max) {
    tree.nodes[index].cylinder = fallback();
    if (!tree.nodes[index].cylinder) throw DegenerateInput("build_tree: cluster cannot be fitted");
    return index;
  }

  Vec3 axis;
  try {
    axis = fit ? fit->axis_dir : estimate_axis(points);
  } catch (const DegenerateInput&) {
    tree.nodes[index].cylinder = fallback();
    if (!tree.nodes[index].cylinder) throw;
    return index;
  }
  DividedCloud halves;
  try {
    halves = divide_point_cloud(points, axis);
  } catch (const DegenerateInput&) {
    tree.nodes[index].cylinder = fallback();
    if (!tree.nodes[index].cylinder) throw;
    return index;
  }
  const std::optional<Cylinder> parent = fallback();
  if (!parent) throw DegenerateInput("build_tree: cluster cannot be fitted");
  tree.nodes[index].cylinder = fit;  // absent when the fit itself failed
  tree.nodes[index].split_axis = axis;
  tree.nodes[index].split_coord = halves.split_coord;
  const int low = build_child(tree, halves.low, depth + 1, params, *parent);
  const int high = build_child(tree, halves.high, depth + 1, params, *parent);
  tree.nodes[index].low = low;
  tree.nodes[index].high = high;
  return index;
}

}  // namespace detail

/// Adaptive piecewise fitting: fit one cylinder, and while its RMS residual is
/// at or above eps_max split the points at the axial median and recurse, up to
/// depth d_max. Leaves that cannot be fitted keep their parent's cylinder.
inline TreeModel build_tree(std::span<const Point3> points, const PiecewiseParams& params, int depth = 1) {
  if (points.empty()) throw DegenerateInput("build_tree: empty point set");
  if (depth < 1) throw DegenerateInput("build_tree: depth must be >= 1");
  TreeModel tree;
  detail::build_node(tree, points, depth, params, std::nullopt);
  Point3 c = Point3::Zero();
  for (const auto& p : points) c += p;
  tree.centroid = c / static_cast<double>(points.size());
  tree.point_count = points.size();
  return tree;
}

inline int find_leaf_index(const Point3& p, const TreeModel& tree) {
  int i = 0;
  while (!tree.nodes[i].is_leaf()) {
    const CylNode& n = tree.nodes[i];
    i = n.split_axis.dot(p) <= n.split_coord ? n.low : n.high;
  }
  return i;
}

/// Binary descent by axial projection to the leaf segment covering `p`.
inline const Cylinder& find_cylinder_in_tree(const Point3& p, const TreeModel& tree) {
  return *tree.nodes[find_leaf_index(p, tree)].cylinder;
}

struct LeafRef {
  int node = 0;
  std::string path;  // "R" for the root, then L/H per descent step
};

inline std::vector<LeafRef> leaves(const TreeModel& tree) {
  std::vector<LeafRef> out;
  if (tree.empty()) return out;
  std::vector<LeafRef> stack{{0, "R"}};
  while (!stack.empty()) {
    LeafRef cur = stack.back();
    stack.pop_back();
    const CylNode& n = tree.nodes[cur.node];
    if (n.is_leaf()) {
      out.push_back(cur);
      continue;
    }
    stack.push_back({n.high, cur.path + "H"});
    stack.push_back({n.low, cur.path + "L"});
  }
  return out;
}

inline int max_depth(const TreeModel& tree) {
  int d = 0;
  for (const auto& n : tree.nodes) d = std::max(d, n.depth);
  return d;
}

}  // namespace trunklio
