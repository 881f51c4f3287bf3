#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trunklio/geometry.hpp"
#include "trunklio/ins.hpp"

namespace trunklio::sim {

inline constexpr int kTrunkSlabs = 32;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Truth-id bands per primitive kind. The id names the primitive a ray hit.
inline constexpr std::int64_t kIdGround = 0;
inline constexpr std::int64_t kIdPlaneBase = 1'000;
inline constexpr std::int64_t kIdTrunkBase = 100'000;
inline constexpr std::int64_t kIdLeafBase = 200'000;
inline constexpr std::int64_t kIdDynamicBase = 300'000;

struct TrunkSpec {
  Point3 base = Point3::Zero();
  double height = 5.0;
  double radius = 0.2;
  double arc_radius = kInf;  // infinite means straight
  double azimuth = 0.0;      // bend direction in the horizontal plane

  bool straight() const { return !std::isfinite(arc_radius); }

  Point3 centerline(double s) const {
    if (straight()) return base + Vec3(0, 0, s);
    const double a = s / arc_radius;
    const Vec3 d(std::cos(azimuth), std::sin(azimuth), 0.0);
    return base + arc_radius * (1.0 - std::cos(a)) * d + Vec3(0, 0, arc_radius * std::sin(a));
  }

  Vec3 tangent(double s) const {
    if (straight()) return Vec3::UnitZ();
    const double a = s / arc_radius;
    const Vec3 d(std::cos(azimuth), std::sin(azimuth), 0.0);
    return std::sin(a) * d + Vec3(0, 0, std::cos(a));
  }

  Cylinder slab(int i) const {
    const double s0 = height * i / kTrunkSlabs;
    const double s1 = height * (i + 1) / kTrunkSlabs;
    const Point3 a = centerline(s0);
    const Point3 b = centerline(s1);
    Cylinder c;
    c.axis_dir = (b - a).normalized();
    c.axis_point = a;
    c.radius = radius;
    c.extent_low = c.axis_dir.dot(a);
    c.extent_high = c.axis_dir.dot(b);
    return c;
  }
};

/// Rectangle `center + a*axis_u + b*axis_v` with |a| <= half_u, |b| <= half_v.
struct PlanePatch {
  Point3 center = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 axis_u = Vec3::UnitX();
  double half_u = 1.0;
  double half_v = 1.0;
  SemanticClass label = SemanticClass::Ground;

  Vec3 axis_v() const { return normal.cross(axis_u); }
};

/// Foliage sphere. `density` is the extinction coefficient per meter.
struct LeafBlob {
  Point3 center = Point3::Zero();
  double radius = 1.5;
  double density = 1.0;
};

/// Axis-aligned box moving back and forth along `direction`.
struct DynamicBox {
  Point3 start = Point3::Zero();
  Vec3 direction = Vec3::UnitY();
  double speed = 1.5;
  double travel = 20.0;
  Vec3 half_size = Vec3(2.0, 0.9, 0.75);

  Point3 center(double t) const {
    const double period = 2.0 * travel;
    double s = std::fmod(speed * t, period);
    if (s < 0) s += period;
    if (s > travel) s = period - s;
    return start + s * direction;
  }
};

struct Scene {
  std::vector<TrunkSpec> trunks;
  std::vector<PlanePatch> planes;
  std::vector<LeafBlob> leaf_blobs;
  std::vector<DynamicBox> dynamic_objects;
};

struct SceneParams {
  double corridor_length = 100.0;
  double corridor_start = -20.0;
  double road_half_width = 3.0;
  double strip_width = 10.0;
  int num_trunks = 20;
  double min_trunk_spacing = 2.0;
  double radius_min = 0.12;
  double radius_max = 0.35;
  double height_min = 4.0;
  double height_max = 8.0;
  double curved_fraction = 0.0;
  double arc_factor_min = 2.0;  // arc radius / height
  double arc_factor_max = 4.0;
  bool buildings = false;
  double building_offset = 16.0;
  double building_height = 8.0;
  double building_segment = 20.0;
  double building_gap = 6.0;
  double building_depth = 10.0;  // side walls at each segment end
  double leaf_fraction = 0.0;
  double leaf_radius_min = 1.2;
  double leaf_radius_max = 2.2;
  double leaf_density = 1.5;
  int num_dynamic = 0;
  double dynamic_speed = 1.5;
  double dynamic_travel = 24.0;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

/// Deterministic scene: a ground patch under a corridor running along +x,
/// dart-thrown trunks on both sides of the road, optional facades, foliage
/// and crossing boxes.
inline Scene generate_scene(const SceneParams& prm, std::uint64_t seed) {
  std::mt19937_64 rng(detail::mix_seed(seed, 1));
  Scene sc;
  const double x0 = prm.corridor_start;
  const double x1 = prm.corridor_start + prm.corridor_length;
  const double outer = prm.road_half_width + prm.strip_width;

  PlanePatch ground;
  ground.center = Point3(0.5 * (x0 + x1), 0.0, 0.0);
  ground.half_u = 0.5 * prm.corridor_length + 80.0;
  ground.half_v = std::max(outer, prm.building_offset) + 80.0;
  ground.label = SemanticClass::Ground;
  sc.planes.push_back(ground);

  const int max_attempts = 2000 * std::max(1, prm.num_trunks);
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(sc.trunks.size()) < prm.num_trunks; ++attempt) {
    const double x = detail::uniform(rng, x0, x1);
    const double side = detail::uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    const double y = side * detail::uniform(rng, prm.road_half_width, outer);
    const double r = detail::uniform(rng, prm.radius_min, prm.radius_max);
    const double h = detail::uniform(rng, prm.height_min, prm.height_max);
    const double curved = detail::uniform(rng, 0.0, 1.0);
    const double factor = detail::uniform(rng, prm.arc_factor_min, prm.arc_factor_max);
    const double az = detail::uniform(rng, -std::numbers::pi, std::numbers::pi);
    const Point3 base(x, y, 0.0);
    bool ok = true;
    for (const auto& t : sc.trunks) {
      if ((t.base.head<2>() - base.head<2>()).norm() < prm.min_trunk_spacing) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    TrunkSpec t;
    t.base = base;
    t.radius = r;
    t.height = h;
    if (curved < prm.curved_fraction) {
      t.arc_radius = factor * h;
      t.azimuth = az;
    }
    sc.trunks.push_back(t);
  }

  if (prm.buildings) {
    for (const double side : {-1.0, 1.0}) {
      for (double xs = x0; xs < x1; xs += prm.building_segment + prm.building_gap) {
        const double len = std::min(prm.building_segment, x1 - xs);
        PlanePatch f;
        f.center = Point3(xs + 0.5 * len, side * prm.building_offset, 0.5 * prm.building_height);
        f.normal = Vec3(0.0, -side, 0.0);
        f.axis_u = Vec3::UnitX();
        f.half_u = 0.5 * len;
        f.half_v = 0.5 * prm.building_height;
        f.label = SemanticClass::Building;
        sc.planes.push_back(f);
        for (const double end : {-1.0, 1.0}) {
          PlanePatch w;
          w.center = Point3(f.center.x() + end * 0.5 * len, side * (prm.building_offset + 0.5 * prm.building_depth),
                            f.center.z());
          w.normal = Vec3(end, 0.0, 0.0);
          w.axis_u = Vec3::UnitY();
          w.half_u = 0.5 * prm.building_depth;
          w.half_v = f.half_v;
          w.label = SemanticClass::Building;
          sc.planes.push_back(w);
        }
      }
    }
  }

  for (const auto& t : sc.trunks) {
    if (detail::uniform(rng, 0.0, 1.0) >= prm.leaf_fraction) continue;
    LeafBlob b;
    b.radius = detail::uniform(rng, prm.leaf_radius_min, prm.leaf_radius_max);
    b.center = t.centerline(t.height) + Vec3(0, 0, 0.6 * b.radius);
    b.density = prm.leaf_density;
    sc.leaf_blobs.push_back(b);
  }

  for (int i = 0; i < prm.num_dynamic; ++i) {
    DynamicBox d;
    const double x = detail::uniform(rng, x0, x1);
    d.start = Point3(x, -0.5 * prm.dynamic_travel, 0.75);
    d.direction = Vec3::UnitY();
    d.speed = prm.dynamic_speed * detail::uniform(rng, 0.7, 1.3);
    d.travel = prm.dynamic_travel;
    d.half_size = Vec3(detail::uniform(rng, 1.5, 2.5), 0.9, 0.75);
    sc.dynamic_objects.push_back(d);
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Trajectories. Planar paths at constant height with yaw along the velocity.

enum class Profile { Straight, Circle, SCurve };

inline std::string_view to_string(Profile p) {
  switch (p) {
    case Profile::Straight: return "straight";
    case Profile::Circle: return "circle";
    case Profile::SCurve: return "s_curve";
  }
  return "straight";
}

inline Profile profile_from_string(std::string_view s) {
  if (s == "straight") return Profile::Straight;
  if (s == "circle") return Profile::Circle;
  if (s == "s_curve") return Profile::SCurve;
  throw ConfigError("unknown trajectory profile '" + std::string(s) + "'");
}

struct TrajectoryParams {
  Profile profile = Profile::SCurve;
  double speed = 1.5;
  double radius = 10.0;     // circle
  double amplitude = 3.0;   // S-curve lateral amplitude
  double wavelength = 60.0; // S-curve period along x, meters
  double height = 1.0;
  Point3 origin = Point3::Zero();
};

class Trajectory {
 public:
  explicit Trajectory(TrajectoryParams p = {}) : p_(p) {
    if (!(p_.speed >= 0.0)) throw ConfigError("trajectory speed must be non-negative");
    if (p_.profile == Profile::Circle && !(p_.radius > 0.0)) throw ConfigError("circle radius must be positive");
    if (p_.profile == Profile::SCurve && !(p_.wavelength > 0.0)) throw ConfigError("wavelength must be positive");
  }

  const TrajectoryParams& params() const { return p_; }

  PoseSample pose(double t) const {
    const Planar c = planar(t);
    return {t, yaw_matrix(std::atan2(c.dy, c.dx)), Vec3(c.x, c.y, p_.height) + p_.origin};
  }

  Vec3 velocity(double t) const {
    const Planar c = planar(t);
    return Vec3(c.dx, c.dy, 0.0);
  }

  Vec3 acceleration(double t) const {
    const Planar c = planar(t);
    return Vec3(c.ddx, c.ddy, 0.0);
  }

  /// Body-frame angular rate.
  Vec3 gyro(double t) const {
    const Planar c = planar(t);
    const double v2 = c.dx * c.dx + c.dy * c.dy;
    if (v2 == 0.0) return Vec3::Zero();
    return Vec3(0.0, 0.0, (c.dx * c.ddy - c.dy * c.ddx) / v2);
  }

  /// Body-frame specific force, f = R^T (a - g).
  Vec3 specific_force(double t, const Vec3& gravity = Vec3(0, 0, -kGravity)) const {
    return pose(t).rot.transpose() * (acceleration(t) - gravity);
  }

  NavState nav_state(double t) const {
    const PoseSample ps = pose(t);
    NavState x;
    x.rot = ps.rot;
    x.pos = ps.pos;
    x.vel = velocity(t);
    x.stamp = t;
    return x;
  }

  ImuSample imu(double t) const { return {t, gyro(t), specific_force(t)}; }

 private:
  struct Planar {
    double x, y, dx, dy, ddx, ddy;
  };

  static Mat3 yaw_matrix(double psi) { return Eigen::AngleAxisd(psi, Vec3::UnitZ()).toRotationMatrix(); }

  Planar planar(double t) const {
    const double v = p_.speed;
    switch (p_.profile) {
      case Profile::Straight: return {v * t, 0.0, v, 0.0, 0.0, 0.0};
      case Profile::Circle: {
        const double r = p_.radius;
        const double w = v / r;
        const double s = std::sin(w * t), c = std::cos(w * t);
        return {r * s, r * (1.0 - c), v * c, v * s, -v * w * s, v * w * c};
      }
      case Profile::SCurve: {
        const double k = 2.0 * std::numbers::pi / p_.wavelength;
        const double a = p_.amplitude;
        const double s = std::sin(k * v * t), c = std::cos(k * v * t);
        return {v * t, a * s, v, a * k * v * c, 0.0, -a * k * k * v * v * s};
      }
    }
    return {};
  }

  TrajectoryParams p_;
};

// ---------------------------------------------------------------------------
// Ray casting.

struct ScanParams {
  int points_per_frame = 10000;
  double frame_period = 0.1;
  double fov_half_deg = 35.0;
  double petals_per_frame = 40.0;
  double rotations_per_frame = 1.6180339887498949;
  double min_range = 0.5;
  double max_range = 60.0;
  double range_sigma = 0.02;
};

struct Hit {
  double range = kInf;
  SemanticClass label = SemanticClass::Unknown;
  std::int64_t id = -1;
};

namespace detail {

inline double ray_plane(const Point3& o, const Vec3& d, const PlanePatch& pp, double s_min) {
  const double den = pp.normal.dot(d);
  if (std::abs(den) < 1e-12) return kInf;
  const double s = pp.normal.dot(pp.center - o) / den;
  if (!(s >= s_min)) return kInf;
  const Vec3 r = o + s * d - pp.center;
  if (std::abs(r.dot(pp.axis_u)) > pp.half_u || std::abs(r.dot(pp.axis_v())) > pp.half_v) return kInf;
  return s;
}

// Lateral surface of a finite cylinder; extents are absolute projections on
// the axis direction.
inline double ray_cylinder(const Point3& o, const Vec3& d, const Cylinder& c, double s_min) {
  const Vec3& u = c.axis_dir;
  const Vec3 m = o - c.axis_point;
  const Vec3 dp = d - d.dot(u) * u;
  const Vec3 mp = m - m.dot(u) * u;
  const double a = dp.squaredNorm();
  if (a < 1e-18) return kInf;
  const double b = 2.0 * mp.dot(dp);
  const double cc = mp.squaredNorm() - c.radius * c.radius;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  for (const double s : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
    if (s < s_min) continue;
    const double h = (o + s * d).dot(u);
    if (h >= c.extent_low && h <= c.extent_high) return s;
  }
  return kInf;
}

inline bool ray_sphere(const Point3& o, const Vec3& d, const Point3& c, double r, double& s0, double& s1) {
  const Vec3 m = o - c;
  const double b = m.dot(d);
  const double cc = m.squaredNorm() - r * r;
  const double disc = b * b - cc;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  s0 = -b - sq;
  s1 = -b + sq;
  return true;
}

inline double ray_box(const Point3& o, const Vec3& d, const Point3& center, const Vec3& half, double s_min) {
  double lo = -kInf, hi = kInf;
  for (int i = 0; i < 3; ++i) {
    const double a = center[i] - half[i] - o[i];
    const double b = center[i] + half[i] - o[i];
    if (std::abs(d[i]) < 1e-15) {
      if (a > 0.0 || b < 0.0) return kInf;
      continue;
    }
    double t0 = a / d[i], t1 = b / d[i];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  if (lo > hi) return kInf;
  if (lo >= s_min) return lo;
  if (hi >= s_min) return hi;
  return kInf;
}

struct TrunkBound {
  Point3 center;
  double radius;
};

inline TrunkBound trunk_bound(const TrunkSpec& t) {
  const Point3 a = t.centerline(0.0);
  const Point3 b = t.centerline(t.height);
  const Point3 mid = t.centerline(0.5 * t.height);
  const Point3 c = 0.5 * (a + b);
  const double r = std::max({(a - c).norm(), (b - c).norm(), (mid - c).norm()}) + t.radius + 1e-6;
  return {c, r};
}

inline bool ray_hits_sphere_ahead(const Point3& o, const Vec3& d, const Point3& c, double r, double s_max) {
  const Vec3 m = c - o;
  const double along = m.dot(d);
  if (along < -r || along > s_max + r) return false;
  return (m - along * d).squaredNorm() <= r * r;
}

}  // namespace detail

/// Precomputed per-scene data for casting.
class Raycaster {
 public:
  explicit Raycaster(const Scene& scene) : scene_(&scene) {
    for (const auto& t : scene.trunks) {
      bounds_.push_back(detail::trunk_bound(t));
      std::vector<Cylinder> s;
      for (int i = 0; i < kTrunkSlabs; ++i) s.push_back(t.slab(i));
      slabs_.push_back(std::move(s));
    }
  }

  const Scene& scene() const { return *scene_; }

  /// Primitives whose bounds come within `range` of `o`.
  void cull(const Point3& o, double range) {
    near_trunks_.clear();
    near_leaves_.clear();
    for (std::size_t i = 0; i < bounds_.size(); ++i) {
      if ((bounds_[i].center - o).norm() <= range + bounds_[i].radius) near_trunks_.push_back(i);
    }
    for (std::size_t i = 0; i < scene_->leaf_blobs.size(); ++i) {
      const auto& b = scene_->leaf_blobs[i];
      if ((b.center - o).norm() <= range + b.radius) near_leaves_.push_back(i);
    }
  }

  /// Nearest hit along the unit ray. Foliage hits are drawn from `rng`.
  Hit cast(const Point3& o, const Vec3& d, double t, double s_min, double s_max, std::mt19937_64& rng) const {
    Hit best;
    best.range = s_max;
    auto take = [&](double s, SemanticClass label, std::int64_t id) {
      if (s < best.range) {
        best.range = s;
        best.label = label;
        best.id = id;
      }
    };
    for (std::size_t i = 0; i < scene_->planes.size(); ++i) {
      const auto& pp = scene_->planes[i];
      take(detail::ray_plane(o, d, pp, s_min), pp.label, i == 0 ? kIdGround : kIdPlaneBase + static_cast<std::int64_t>(i));
    }
    for (std::size_t i : near_trunks_) {
      if (!detail::ray_hits_sphere_ahead(o, d, bounds_[i].center, bounds_[i].radius, best.range)) continue;
      for (const auto& c : slabs_[i]) {
        take(detail::ray_cylinder(o, d, c, s_min), SemanticClass::PoleLike, kIdTrunkBase + static_cast<std::int64_t>(i));
      }
    }
    for (std::size_t i = 0; i < scene_->dynamic_objects.size(); ++i) {
      const auto& db = scene_->dynamic_objects[i];
      take(detail::ray_box(o, d, db.center(t), db.half_size, s_min), SemanticClass::DynamicObject,
           kIdDynamicBase + static_cast<std::int64_t>(i));
    }
    for (std::size_t i : near_leaves_) {
      const auto& b = scene_->leaf_blobs[i];
      double s0, s1;
      if (!detail::ray_sphere(o, d, b.center, b.radius, s0, s1)) continue;
      s0 = std::max(s0, s_min);
      s1 = std::min(s1, best.range);
      if (!(s1 > s0)) continue;
      // Beer-Lambert: first interaction depth inside the chord.
      const double p_hit = 1.0 - std::exp(-b.density * (s1 - s0));
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      if (u >= p_hit) continue;
      const double s = s0 - std::log(1.0 - u) / b.density;
      take(s, SemanticClass::TreeLeaves, kIdLeafBase + static_cast<std::int64_t>(i));
    }
    if (best.id < 0) best.range = kInf;
    return best;
  }

 private:
  const Scene* scene_;
  std::vector<detail::TrunkBound> bounds_;
  std::vector<std::vector<Cylinder>> slabs_;
  std::vector<std::size_t> near_trunks_;
  std::vector<std::size_t> near_leaves_;
};

/// Unit ray direction in the LiDAR frame (+x forward) for global shot index g.
inline Vec3 rosette_direction(std::int64_t g, const ScanParams& sp) {
  const double tau = static_cast<double>(g) / sp.points_per_frame;
  const double half = sp.fov_half_deg * std::numbers::pi / 180.0;
  const double rho = half * std::abs(std::sin(std::numbers::pi * sp.petals_per_frame * tau));
  const double phi = 2.0 * std::numbers::pi * sp.rotations_per_frame * tau;
  return Vec3(std::cos(rho), std::sin(rho) * std::cos(phi), std::sin(rho) * std::sin(phi));
}

/// Renders frame `index` (start time index * period). Points are in the LiDAR
/// frame; p_b = ext.rot * (p_l - ext.trans).
inline LabeledFrame render_scan(Raycaster& rc, const Trajectory& traj, std::int64_t index, const ScanParams& sp,
                                const Extrinsics& ext, std::uint64_t seed) {
  std::mt19937_64 rng(detail::mix_seed(seed, 1000 + static_cast<std::uint64_t>(index)));
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledFrame f;
  f.stamp = static_cast<double>(index) * sp.frame_period;
  f.period = sp.frame_period;
  f.points.reserve(static_cast<std::size_t>(sp.points_per_frame));

  const PoseSample mid = traj.pose(f.stamp + 0.5 * sp.frame_period);
  rc.cull(mid.pos, sp.max_range + traj.params().speed * sp.frame_period + 2.0);

  for (int k = 0; k < sp.points_per_frame; ++k) {
    const double dt = sp.frame_period * k / sp.points_per_frame;
    const double t = f.stamp + dt;
    const PoseSample body = traj.pose(t);
    const Mat3 r_wl = body.rot * ext.rot;
    const Point3 o = body.pos - r_wl * ext.trans;
    const Vec3 dl = rosette_direction(index * sp.points_per_frame + k, sp);
    const Vec3 dw = r_wl * dl;
    const Hit h = rc.cast(o, dw, t, sp.min_range, sp.max_range, rng);
    double n = 0.0;
    if (sp.range_sigma > 0.0) {
      // Gaussian truncated at 3 sigma.
      do n = noise(rng);
      while (std::abs(n) > 3.0);
      n *= sp.range_sigma;
    }
    if (!std::isfinite(h.range)) continue;
    LabeledPoint lp;
    lp.p = (h.range + n) * dl;
    lp.t_offset = dt;
    lp.label = h.label;
    lp.truth_id = h.id;
    f.points.push_back(lp);
  }
  return f;
}

/// Fraction of an angular grid over the field of view touched by the frames'
/// ray directions.
inline double coverage_fraction(std::span<const LabeledFrame> frames, const ScanParams& sp, int bins = 40) {
  const double half = sp.fov_half_deg * std::numbers::pi / 180.0;
  const double span = std::sin(half);
  std::vector<char> hit(static_cast<std::size_t>(bins * bins), 0);
  int inside = 0;
  for (int i = 0; i < bins; ++i) {
    for (int j = 0; j < bins; ++j) {
      const double y = -span + (i + 0.5) * 2.0 * span / bins;
      const double z = -span + (j + 0.5) * 2.0 * span / bins;
      inside += (y * y + z * z <= span * span);
    }
  }
  for (const auto& f : frames) {
    for (const auto& p : f.points) {
      const Vec3 d = p.p.normalized();
      const int i = static_cast<int>(std::floor((d.y() + span) / (2.0 * span) * bins));
      const int j = static_cast<int>(std::floor((d.z() + span) / (2.0 * span) * bins));
      if (i < 0 || j < 0 || i >= bins || j >= bins) continue;
      hit[static_cast<std::size_t>(i * bins + j)] = 1;
    }
  }
  int count = 0;
  for (int i = 0; i < bins; ++i) {
    for (int j = 0; j < bins; ++j) {
      const double y = -span + (i + 0.5) * 2.0 * span / bins;
      const double z = -span + (j + 0.5) * 2.0 * span / bins;
      if (y * y + z * z <= span * span) count += hit[static_cast<std::size_t>(i * bins + j)];
    }
  }
  return static_cast<double>(count) / inside;
}

// ---------------------------------------------------------------------------
// IMU.

/// Simulated sensor errors. White terms are per-sample standard deviations;
/// bias terms are stationary standard deviations of first-order Gauss-Markov
/// processes with the given correlation time.
struct ImuErrorParams {
  double gyro_white = 0.0;
  double accel_white = 0.0;
  double gyro_bias_sigma = 0.0;
  double accel_bias_sigma = 0.0;
  double corr_time_gyr = 3600.0;
  double corr_time_acc = 3600.0;
  double rate_hz = 200.0;
};

/// Exact discretization of a stationary first-order Gauss-Markov process.
inline std::vector<double> gauss_markov_series(std::size_t n, double dt, double corr_time, double sigma,
                                               std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out(n);
  if (n == 0) return out;
  const double phi = std::exp(-dt / corr_time);
  const double drive = sigma * std::sqrt(1.0 - phi * phi);
  double b = sigma * g(rng);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = b;
    b = phi * b + drive * g(rng);
  }
  return out;
}

/// IMU stream at stamps k / rate_hz, k = 0..n-1, covering [0, duration].
inline std::vector<ImuSample> corrupt_imu(const Trajectory& traj, double duration, const ImuErrorParams& e,
                                          std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(std::ceil(duration * e.rate_hz - 1e-9)) + 1;
  const double dt = 1.0 / e.rate_hz;
  std::mt19937_64 rng(detail::mix_seed(seed, 2));
  std::normal_distribution<double> g(0.0, 1.0);
  std::array<std::vector<double>, 3> bg, ba;
  for (int i = 0; i < 3; ++i) bg[i] = gauss_markov_series(n, dt, e.corr_time_gyr, e.gyro_bias_sigma, rng);
  for (int i = 0; i < 3; ++i) ba[i] = gauss_markov_series(n, dt, e.corr_time_acc, e.accel_bias_sigma, rng);
  std::vector<ImuSample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / e.rate_hz;
    ImuSample s = traj.imu(t);
    for (int i = 0; i < 3; ++i) {
      s.gyro[i] += bg[i][k] + (e.gyro_white > 0.0 ? e.gyro_white * g(rng) : 0.0);
      s.accel[i] += ba[i][k] + (e.accel_white > 0.0 ? e.accel_white * g(rng) : 0.0);
    }
    out[k] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets.

struct DatasetParams {
  SceneParams scene;
  TrajectoryParams trajectory;
  ScanParams scan;
  ImuErrorParams imu;
  Extrinsics ext;
  double duration = 60.0;
  double truth_rate_hz = 100.0;
};

struct Dataset {
  Scene scene;
  std::vector<ImuSample> imu;
  std::vector<LabeledFrame> frames;
  std::vector<PoseSample> truth;
  NavState initial;
  Extrinsics ext;
  double frame_period = 0.1;  // frame j starts at j * frame_period
};

inline Extrinsics default_extrinsics() {
  Extrinsics e;
  e.rot = Eigen::AngleAxisd(5.0 * std::numbers::pi / 180.0, Vec3::UnitY()).toRotationMatrix();
  e.trans = Vec3(-0.2, 0.0, -0.4);
  return e;
}

inline Dataset generate_dataset(const DatasetParams& dp, std::uint64_t seed) {
  if (!(dp.duration > 0.0)) throw ConfigError("duration must be positive");
  Dataset ds;
  ds.scene = generate_scene(dp.scene, seed);
  ds.ext = dp.ext;
  ds.frame_period = dp.scan.frame_period;
  const Trajectory traj(dp.trajectory);
  ds.initial = traj.nav_state(0.0);
  // Two extra samples so buffers ending at the duration are covered despite
  // rounding of frame stamps.
  ds.imu = corrupt_imu(traj, dp.duration + 2.0 / dp.imu.rate_hz, dp.imu, seed);
  Raycaster rc(ds.scene);
  const auto n_frames = static_cast<std::int64_t>(std::floor(dp.duration / dp.scan.frame_period + 1e-9));
  for (std::int64_t j = 0; j < n_frames; ++j) ds.frames.push_back(render_scan(rc, traj, j, dp.scan, dp.ext, seed));
  const auto n_truth = static_cast<std::int64_t>(std::floor(dp.duration * dp.truth_rate_hz + 1e-9));
  for (std::int64_t k = 0; k <= n_truth; ++k) ds.truth.push_back(traj.pose(static_cast<double>(k) / dp.truth_rate_hz));
  return ds;
}

// scene.json / imu.csv / frames/NNNNN.csv / truth.csv

namespace detail {

inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }
inline Vec3 json_vec(const nlohmann::json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

// Row-major; exact through the JSON round trip.
inline nlohmann::json mat_json(const Mat3& m) {
  auto j = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j.push_back(m(r, c));
  return j;
}

inline Mat3 json_mat(const nlohmann::json& j) {
  if (j.size() != 9) throw Error("expected 9 matrix entries");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(static_cast<std::size_t>(3 * r + c)).get<double>();
  return m;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  os << std::setprecision(17);
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw Error("cannot read " + p.string());
  return is;
}

inline std::vector<double> split_doubles(const std::string& line) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const std::size_t next = line.find(',', pos);
    const std::string tok = line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    out.push_back(std::stod(tok));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene& s) {
  using nlohmann::json;
  json j;
  j["trunks"] = json::array();
  for (const auto& t : s.trunks) {
    j["trunks"].push_back({{"base", detail::vec_json(t.base)},
                           {"height", t.height},
                           {"radius", t.radius},
                           {"arc_radius", t.straight() ? json(nullptr) : json(t.arc_radius)},
                           {"azimuth", t.azimuth}});
  }
  j["planes"] = json::array();
  for (const auto& p : s.planes) {
    j["planes"].push_back({{"center", detail::vec_json(p.center)},
                           {"normal", detail::vec_json(p.normal)},
                           {"axis_u", detail::vec_json(p.axis_u)},
                           {"half_u", p.half_u},
                           {"half_v", p.half_v},
                           {"label", static_cast<int>(p.label)}});
  }
  j["leaf_blobs"] = json::array();
  for (const auto& b : s.leaf_blobs) {
    j["leaf_blobs"].push_back({{"center", detail::vec_json(b.center)}, {"radius", b.radius}, {"density", b.density}});
  }
  j["dynamic_objects"] = json::array();
  for (const auto& d : s.dynamic_objects) {
    j["dynamic_objects"].push_back({{"start", detail::vec_json(d.start)},
                                    {"direction", detail::vec_json(d.direction)},
                                    {"speed", d.speed},
                                    {"travel", d.travel},
                                    {"half_size", detail::vec_json(d.half_size)}});
  }
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  for (const auto& t : j.at("trunks")) {
    TrunkSpec ts;
    ts.base = detail::json_vec(t.at("base"));
    ts.height = t.at("height").get<double>();
    ts.radius = t.at("radius").get<double>();
    ts.arc_radius = t.at("arc_radius").is_null() ? kInf : t.at("arc_radius").get<double>();
    ts.azimuth = t.at("azimuth").get<double>();
    s.trunks.push_back(ts);
  }
  for (const auto& p : j.at("planes")) {
    PlanePatch pp;
    pp.center = detail::json_vec(p.at("center"));
    pp.normal = detail::json_vec(p.at("normal"));
    pp.axis_u = detail::json_vec(p.at("axis_u"));
    pp.half_u = p.at("half_u").get<double>();
    pp.half_v = p.at("half_v").get<double>();
    pp.label = semantic_class_from_int(p.at("label").get<int>());
    s.planes.push_back(pp);
  }
  for (const auto& b : j.at("leaf_blobs")) {
    s.leaf_blobs.push_back({detail::json_vec(b.at("center")), b.at("radius").get<double>(), b.at("density").get<double>()});
  }
  for (const auto& d : j.at("dynamic_objects")) {
    DynamicBox db;
    db.start = detail::json_vec(d.at("start"));
    db.direction = detail::json_vec(d.at("direction"));
    db.speed = d.at("speed").get<double>();
    db.travel = d.at("travel").get<double>();
    db.half_size = detail::json_vec(d.at("half_size"));
    s.dynamic_objects.push_back(db);
  }
  return s;
}

inline void write_pose_csv(std::ostream& os, std::span<const PoseSample> poses) {
  os << "t,x,y,z,qw,qx,qy,qz\n";
  for (const auto& p : poses) {
    Eigen::Quaterniond q(p.rot);
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    os << p.stamp << ',' << p.pos.x() << ',' << p.pos.y() << ',' << p.pos.z() << ',' << q.w() << ',' << q.x() << ','
       << q.y() << ',' << q.z() << '\n';
  }
}

inline std::vector<PoseSample> read_pose_csv(std::istream& is) {
  std::vector<PoseSample> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto v = detail::split_doubles(line);
    if (v.size() != 8) throw Error("pose csv: expected 8 columns");
    const Eigen::Quaterniond q(v[4], v[5], v[6], v[7]);
    out.push_back({v[0], q.normalized().toRotationMatrix(), Vec3(v[1], v[2], v[3])});
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  {
    nlohmann::json j = scene_to_json(ds.scene);
    j["extrinsics"] = {{"rot", detail::mat_json(ds.ext.rot)}, {"trans", detail::vec_json(ds.ext.trans)}};
    j["initial"] = {{"t", ds.initial.stamp},
                    {"pos", detail::vec_json(ds.initial.pos)},
                    {"vel", detail::vec_json(ds.initial.vel)},
                    {"rot", detail::mat_json(ds.initial.rot)}};
    j["frame_period"] = ds.frame_period;
    auto os = detail::open_out(dir / "scene.json");
    os << j.dump(2) << '\n';
  }
  {
    auto os = detail::open_out(dir / "imu.csv");
    os << "t,wx,wy,wz,ax,ay,az\n";
    for (const auto& s : ds.imu) {
      os << s.stamp << ',' << s.gyro.x() << ',' << s.gyro.y() << ',' << s.gyro.z() << ',' << s.accel.x() << ','
         << s.accel.y() << ',' << s.accel.z() << '\n';
    }
  }
  for (std::size_t j = 0; j < ds.frames.size(); ++j) {
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << j << ".csv";
    auto os = detail::open_out(dir / "frames" / name.str());
    const auto& f = ds.frames[j];
    os << "x,y,z,t_offset,label,truth_id\n";
    for (const auto& p : f.points) {
      os << p.p.x() << ',' << p.p.y() << ',' << p.p.z() << ',' << p.t_offset << ',' << static_cast<int>(p.label) << ','
         << p.truth_id << '\n';
    }
  }
  auto os = detail::open_out(dir / "truth.csv");
  write_pose_csv(os, ds.truth);
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  {
    auto is = detail::open_in(dir / "scene.json");
    const auto j = nlohmann::json::parse(is);
    ds.scene = scene_from_json(j);
    ds.frame_period = j.at("frame_period").get<double>();
    const auto& e = j.at("extrinsics");
    ds.ext.rot = detail::json_mat(e.at("rot"));
    ds.ext.trans = detail::json_vec(e.at("trans"));
    const auto& in = j.at("initial");
    ds.initial.stamp = in.at("t").get<double>();
    ds.initial.pos = detail::json_vec(in.at("pos"));
    ds.initial.vel = detail::json_vec(in.at("vel"));
    ds.initial.rot = detail::json_mat(in.at("rot"));
  }
  {
    auto is = detail::open_in(dir / "imu.csv");
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto v = detail::split_doubles(line);
      if (v.size() != 7) throw Error("imu.csv: expected 7 columns");
      ds.imu.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])});
    }
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "frames")) {
    if (e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    auto is = detail::open_in(p);
    LabeledFrame f;
    f.period = ds.frame_period;
    f.stamp = static_cast<double>(ds.frames.size()) * ds.frame_period;
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto v = detail::split_doubles(line);
      if (v.size() != 6) throw Error(p.string() + ": expected 6 columns");
      LabeledPoint lp;
      lp.p = Vec3(v[0], v[1], v[2]);
      lp.t_offset = v[3];
      lp.label = semantic_class_from_int(static_cast<int>(v[4]));
      lp.truth_id = static_cast<std::int64_t>(v[5]);
      f.points.push_back(lp);
    }
    ds.frames.push_back(std::move(f));
  }
  auto is = detail::open_in(dir / "truth.csv");
  ds.truth = read_pose_csv(is);
  return ds;
}

}  // namespace trunklio::sim
