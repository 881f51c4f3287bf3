#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "trunklio/piecewise.hpp"

namespace trunklio {

/// A pole-like object in the landmark map: its piecewise model plus the
/// world-frame points (tagged with the map frame that contributed them) it
/// was fitted from.
struct MapTree {
  int id = 0;
  TreeModel model;
  PointList points;
  std::vector<std::int64_t> point_frames;
  std::size_t changes_since_fit = 0;
  std::size_t points_at_fit = 0;
};

struct Association {
  std::size_t point_index = 0;
  int tree_id = 0;
  std::size_t tree_index = 0;  // position in the snapshot
  int leaf_node = 0;
  Cylinder cylinder;
  double distance_to_centroid = 0.0;
};

/// Horizontal (x-y) distance to a tree centroid.
inline double distance_to_tree(const Point3& p, const TreeModel& tree) {
  return (p.head<2>() - tree.centroid.head<2>()).norm();
}

struct CoarseMatch {
  std::size_t tree_index = 0;
  double distance = 0.0;
};

/// Linear scan for the nearest tree; the first (lowest id) wins ties.
inline std::optional<CoarseMatch> nearest_tree(const Point3& p, std::span<const MapTree> trees) {
  std::optional<CoarseMatch> best;
  double d_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const double d = distance_to_tree(p, trees[i].model);
    if (d < d_min) {
      d_min = d;
      best = CoarseMatch{i, d};
    }
  }
  return best;
}

/// Coarse-to-fine association: nearest tree by centroid distance, then the
/// leaf segment by binary descent. No association beyond `threshold`.
inline std::optional<Association> associate_point(const Point3& p, std::span<const MapTree> trees, double threshold) {
  const auto coarse = nearest_tree(p, trees);
  if (!coarse || coarse->distance > threshold) return std::nullopt;
  const MapTree& tree = trees[coarse->tree_index];
  Association a;
  a.tree_id = tree.id;
  a.tree_index = coarse->tree_index;
  a.leaf_node = find_leaf_index(p, tree.model);
  a.cylinder = *tree.model.nodes[a.leaf_node].cylinder;
  a.distance_to_centroid = coarse->distance;
  return a;
}

}  // namespace trunklio
