#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <ostream>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trunklio/association.hpp"

namespace trunklio {

struct ClusterParams {
  double dbscan_eps = 0.3;
  int dbscan_min_pts = 5;
  std::size_t min_cluster_size = 30;
  double merge_radius = 0.5;
};

struct MapParams {
  ClusterParams cluster;
  double match_radius = 1.0;
  std::size_t buffer_capacity = 20;
  std::size_t init_frames = 3;
  // Refit cadence: a tree is refit once it has changed by this fraction of
  // its size or by this many points since the last fit.
  double refit_fraction = 0.1;
  std::size_t refit_points = 50;
  PiecewiseParams piecewise;
};

struct DbscanResult {
  std::vector<int> labels;  // cluster index per point, -1 for noise
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> noise;
};

namespace detail {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

inline CellKey cell_of(const Point3& p, double size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / size)), static_cast<std::int64_t>(std::floor(p.y() / size)),
          static_cast<std::int64_t>(std::floor(p.z() / size))};
}

}  // namespace detail

/// DBSCAN with a uniform grid for eps-neighborhood queries. Core points have
/// at least min_pts neighbors within eps (self included). Clusters are grown
/// from unvisited core points in input order, so a border point belongs to
/// the earliest cluster that reaches it.
inline DbscanResult dbscan_cluster(std::span<const Point3> points, double eps, int min_pts) {
  const std::size_t n = points.size();
  DbscanResult out;
  out.labels.assign(n, -1);
  if (n == 0) return out;

  std::unordered_map<detail::CellKey, std::vector<std::size_t>, detail::CellKeyHash> grid;
  grid.reserve(n);
  for (std::size_t i = 0; i < n; ++i) grid[detail::cell_of(points[i], eps)].push_back(i);

  const double eps2 = eps * eps;
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = detail::cell_of(points[i], eps);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if ((points[j] - points[i]).squaredNorm() <= eps2) neighbors[i].push_back(j);
          }
        }
  }

  std::vector<bool> visited(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i] || neighbors[i].size() < static_cast<std::size_t>(min_pts)) continue;
    const int cid = static_cast<int>(out.clusters.size());
    out.clusters.emplace_back();
    std::deque<std::size_t> queue{i};
    visited[i] = true;
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (out.labels[q] < 0) {
        out.labels[q] = cid;
        out.clusters[cid].push_back(q);
      }
      if (neighbors[q].size() < static_cast<std::size_t>(min_pts)) continue;
      for (std::size_t j : neighbors[q]) {
        if (out.labels[j] < 0 && !visited[j]) {
          visited[j] = true;
          queue.push_back(j);
        }
      }
    }
  }
  for (auto& c : out.clusters) std::sort(c.begin(), c.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] < 0) out.noise.push_back(i);
  }
  return out;
}

/// World-frame map of pole-like landmarks kept as a linear array of trees.
/// Single writer: update() needs exclusive access; trees() may be read
/// concurrently between updates.
class CylinderMap {
 public:
  explicit CylinderMap(MapParams params = {}) : params_(std::move(params)) {}

  const MapParams& params() const { return params_; }
  const std::vector<MapTree>& trees() const { return trees_; }
  std::size_t buffered_frames() const { return buffer_.size(); }
  bool initialized() const { return initialized_; }
  std::int64_t frames_seen() const { return next_frame_; }

  void update(std::span<const Point3> pole_points_world) {
    const std::int64_t frame = next_frame_++;
    buffer_.emplace_back(frame, PointList(pole_points_world.begin(), pole_points_world.end()));
    while (buffer_.size() > params_.buffer_capacity) buffer_.pop_front();

    std::vector<std::pair<Point3, std::int64_t>> incoming;
    if (!initialized_) {
      if (buffer_.size() < params_.init_frames) return;
      initialized_ = true;
      for (const auto& [id, pts] : buffer_)
        for (const auto& p : pts) incoming.emplace_back(p, id);
    } else {
      for (const auto& p : pole_points_world) incoming.emplace_back(p, frame);
    }

    PointList unmatched;
    std::vector<std::int64_t> unmatched_frames;
    for (const auto& [p, id] : incoming) {
      const auto m = nearest_tree(p, trees_);
      if (m && m->distance <= params_.match_radius) {
        MapTree& t = trees_[m->tree_index];
        t.points.push_back(p);
        t.point_frames.push_back(id);
        ++t.changes_since_fit;
      } else {
        unmatched.push_back(p);
        unmatched_frames.push_back(id);
      }
    }

    seed_new_trees(unmatched, unmatched_frames);
    delete_old_points(frame);
    refit_trees();
    merge_close_trees();
  }

  /// One CSV record per leaf cylinder.
  void write_csv(std::ostream& os) const {
    os << "tree_id,leaf_path,ux,uy,uz,qx,qy,qz,r,extent_low,extent_high,fit_rms\n";
    os.precision(17);
    for (const auto& t : trees_) {
      for (const auto& leaf : leaves(t.model)) {
        const Cylinder& c = *t.model.nodes[leaf.node].cylinder;
        os << t.id << ',' << leaf.path << ',' << c.axis_dir.x() << ',' << c.axis_dir.y() << ',' << c.axis_dir.z()
           << ',' << c.axis_point.x() << ',' << c.axis_point.y() << ',' << c.axis_point.z() << ',' << c.radius << ','
           << c.extent_low << ',' << c.extent_high << ',' << c.fit_rms << '\n';
      }
    }
  }

 private:
  void seed_new_trees(const PointList& pts, const std::vector<std::int64_t>& frames) {
    if (pts.empty()) return;
    const auto& cp = params_.cluster;
    const DbscanResult db = dbscan_cluster(pts, cp.dbscan_eps, cp.dbscan_min_pts);
    for (const auto& cluster : db.clusters) {
      if (cluster.size() < cp.min_cluster_size) continue;
      PointList members;
      std::vector<std::int64_t> member_frames;
      members.reserve(cluster.size());
      for (std::size_t i : cluster) {
        members.push_back(pts[i]);
        member_frames.push_back(frames[i]);
      }
      Point3 c = Point3::Zero();
      for (const auto& p : members) c += p;
      c /= static_cast<double>(members.size());

      // Too close to an existing tree: absorb rather than duplicate.
      TreeModel probe;
      probe.centroid = c;
      bool absorbed = false;
      for (auto& t : trees_) {
        if (distance_to_tree(t.model.centroid, probe) < cp.merge_radius) {
          t.points.insert(t.points.end(), members.begin(), members.end());
          t.point_frames.insert(t.point_frames.end(), member_frames.begin(), member_frames.end());
          t.changes_since_fit += members.size();
          absorbed = true;
          break;
        }
      }
      if (absorbed) continue;

      MapTree t;
      try {
        t.model = build_tree(members, params_.piecewise);
      } catch (const DegenerateInput&) {
        continue;
      }
      t.id = next_tree_id_++;
      t.points = std::move(members);
      t.point_frames = std::move(member_frames);
      t.points_at_fit = t.points.size();
      trees_.push_back(std::move(t));
    }
  }

  void delete_old_points(std::int64_t frame) {
    const std::int64_t oldest = frame - static_cast<std::int64_t>(params_.buffer_capacity) + 1;
    std::vector<MapTree> kept;
    kept.reserve(trees_.size());
    for (auto& t : trees_) {
      std::size_t w = 0;
      for (std::size_t i = 0; i < t.points.size(); ++i) {
        if (t.point_frames[i] >= oldest) {
          t.points[w] = t.points[i];
          t.point_frames[w] = t.point_frames[i];
          ++w;
        }
      }
      t.changes_since_fit += t.points.size() - w;
      t.points.resize(w);
      t.point_frames.resize(w);
      if (t.points.size() >= params_.cluster.min_cluster_size) kept.push_back(std::move(t));
    }
    trees_ = std::move(kept);
  }

  bool needs_refit(const MapTree& t) const {
    if (t.changes_since_fit == 0) return false;
    return t.changes_since_fit >= params_.refit_points ||
           static_cast<double>(t.changes_since_fit) >= params_.refit_fraction * static_cast<double>(t.points_at_fit);
  }

  void refit(MapTree& t) {
    try {
      t.model = build_tree(t.points, params_.piecewise);
    } catch (const DegenerateInput&) {
      return;  // keep the previous model until enough good points arrive
    }
    t.changes_since_fit = 0;
    t.points_at_fit = t.points.size();
  }

  void refit_trees() {
    for (auto& t : trees_) {
      if (needs_refit(t)) refit(t);
    }
  }

  void merge_close_trees() {
    for (std::size_t i = 0; i < trees_.size(); ++i) {
      for (std::size_t j = i + 1; j < trees_.size();) {
        if (distance_to_tree(trees_[j].model.centroid, trees_[i].model) < params_.cluster.merge_radius) {
          MapTree& a = trees_[i];
          MapTree& b = trees_[j];
          a.points.insert(a.points.end(), b.points.begin(), b.points.end());
          a.point_frames.insert(a.point_frames.end(), b.point_frames.begin(), b.point_frames.end());
          refit(a);
          trees_.erase(trees_.begin() + static_cast<std::ptrdiff_t>(j));
        } else {
          ++j;
        }
      }
    }
  }

  MapParams params_;
  std::vector<MapTree> trees_;
  std::deque<std::pair<std::int64_t, PointList>> buffer_;
  bool initialized_ = false;
  std::int64_t next_frame_ = 0;
  int next_tree_id_ = 0;
};

inline void update_map(std::span<const Point3> pole_points_world, CylinderMap& map) { map.update(pole_points_world); }

}  // namespace trunklio
