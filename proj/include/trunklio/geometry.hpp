#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "trunklio/common.hpp"
#include "trunklio/so3.hpp"

namespace trunklio {

/// Seven-parameter cylinder (axis direction, axis point, radius) plus the
/// axial span of its member points and the RMS of its surface residuals.
struct Cylinder {
  Vec3 axis_dir = Vec3::UnitZ();
  Point3 axis_point = Point3::Zero();
  double radius = 0.0;
  double extent_low = 0.0;   // min of axis_dir . p over members
  double extent_high = 0.0;  // max of axis_dir . p over members
  double fit_rms = 0.0;
};

struct Circle2 {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Point3& p) const { return normal.dot(p) - offset; }
};

struct RansacParams {
  double inlier_tol = 0.03;
  int max_iters = 300;
  double min_inlier_frac = 0.6;
  std::uint64_t seed = 0;
  // Early exit once this probability of having drawn an all-inlier sample is
  // reached. Set to 1.0 to always run max_iters.
  double confidence = 0.9999;
};

struct CircleFit {
  Circle2 circle;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

namespace detail {

inline bool sign_canonical_flip(const Vec3& v) {
  constexpr double kTie = 1e-12;
  if (std::abs(v.z()) > kTie) return v.z() < 0.0;
  if (std::abs(v.x()) > kTie) return v.x() < 0.0;
  return v.y() < 0.0;
}

inline std::optional<Circle2> circle_through(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a;
  const Vec2 ac = c - a;
  const double d = 2.0 * (ab.x() * ac.y() - ab.y() * ac.x());
  const double scale = ab.squaredNorm() * ac.squaredNorm();
  if (std::abs(d) <= 1e-12 * std::sqrt(scale) || scale == 0.0) return std::nullopt;
  const double ab2 = ab.squaredNorm();
  const double ac2 = ac.squaredNorm();
  const Vec2 rel((ac.y() * ab2 - ab.y() * ac2) / d, (ab.x() * ac2 - ac.x() * ab2) / d);
  return Circle2{a + rel, rel.norm()};
}

}  // namespace detail

/// Principal axis of a point set: the eigenvector of the centered covariance
/// with the largest eigenvalue, sign-normalized (+z, then +x, then +y).
inline Vec3 estimate_axis(std::span<const Point3> points) {
  if (points.size() < 3) throw DegenerateInput("estimate_axis: fewer than 3 points");
  Point3 mean = Point3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  const double tr = cov.trace();
  if (!(tr > 1e-24)) throw DegenerateInput("estimate_axis: covariance has rank 0");
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Vec3 axis = es.eigenvectors().col(2).normalized();
  if (detail::sign_canonical_flip(axis)) axis = -axis;
  return axis;
}

/// Proper rotation taking `axis` onto +z. Identity for +z; a half turn about x
/// for -z.
inline Mat3 axis_alignment_rotation(const Vec3& axis) {
  const Mat3 flip_x = Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
  if (axis.x() == 0.0 && axis.y() == 0.0) return axis.z() > 0.0 ? Mat3::Identity() : flip_x;
  const double c = axis.z();
  if (c < 0.0) {
    // Go through the half turn so the remaining rotation is small and well
    // conditioned.
    return axis_alignment_rotation(flip_x * axis) * flip_x;
  }
  const Mat3 k = so3::hat(axis.cross(Vec3::UnitZ()));
  return Mat3::Identity() + k + k * k * (1.0 / (1.0 + c));
}

/// Algebraic (Kasa) least-squares circle.
inline Circle2 fit_circle_ls(std::span<const Vec2> pts) {
  if (pts.size() < 3) throw DegenerateInput("fit_circle_ls: fewer than 3 points");
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());

  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  for (const auto& p : pts) {
    const Vec2 d = p - mean;
    const Eigen::Vector3d row(d.x(), d.y(), 1.0);
    ata.noalias() += row * row.transpose();
    atb += row * d.squaredNorm();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(ata);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(2);
  if (!(lmin > 0.0) || lmax / lmin > 1e12) throw DegenerateInput("fit_circle_ls: collinear or singular points");
  const Eigen::Vector3d sol = ata.ldlt().solve(atb);
  const Vec2 c_rel(0.5 * sol(0), 0.5 * sol(1));
  const double r2 = sol(2) + c_rel.squaredNorm();
  if (!(r2 > 0.0)) throw DegenerateInput("fit_circle_ls: non-positive radius");
  return Circle2{mean + c_rel, std::sqrt(r2)};
}

inline std::size_t mark_circle_inliers(std::span<const Vec2> pts, const Circle2& c, double tol,
                                       std::vector<bool>& mask) {
  mask.assign(pts.size(), false);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (std::abs((pts[i] - c.center).norm() - c.radius) <= tol) {
      mask[i] = true;
      ++n;
    }
  }
  return n;
}

/// RANSAC over 3-point circles, scored by geometric residual; the winning
/// consensus set is refit with fit_circle_ls and the returned mask refers to
/// the refit circle.
inline CircleFit ransac_fit_circle(std::span<const Vec2> pts, const RansacParams& params) {
  const std::size_t n = pts.size();
  if (n < 3) throw DegenerateInput("ransac_fit_circle: fewer than 3 points");

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  std::optional<Circle2> best;
  std::size_t best_count = 0;
  std::vector<bool> mask;
  const double log_fail = std::log(std::max(1e-12, 1.0 - params.confidence));

  long needed = params.max_iters;
  for (long it = 0; it < needed; ++it) {
    std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    auto c = detail::circle_through(pts[i], pts[j], pts[k]);
    if (!c) continue;
    std::size_t count = 0;
    for (const auto& p : pts) {
      if (std::abs((p - c->center).norm() - c->radius) <= params.inlier_tol) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = c;
      if (params.confidence < 1.0) {
        const double w = static_cast<double>(count) / static_cast<double>(n);
        const double p_good = w * w * w;
        if (p_good >= 1.0) {
          needed = std::min<long>(needed, it + 1);
        } else {
          const double k_needed = std::ceil(log_fail / std::log(1.0 - p_good));
          needed = std::min<long>(needed, static_cast<long>(std::max(1.0, k_needed)));
        }
      }
    }
  }
  if (!best || best_count < 3) throw NoConsensus("ransac_fit_circle: no valid minimal sample");

  mark_circle_inliers(pts, *best, params.inlier_tol, mask);
  std::vector<Vec2> consensus;
  consensus.reserve(best_count);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) consensus.push_back(pts[i]);
  }
  CircleFit out;
  try {
    out.circle = fit_circle_ls(consensus);
  } catch (const DegenerateInput&) {
    out.circle = *best;
  }
  out.inlier_count = mark_circle_inliers(pts, out.circle, params.inlier_tol, out.inliers);
  if (out.inlier_count < best_count) {
    // Refit drifted away from its own consensus; keep the minimal-sample circle.
    out.circle = *best;
    out.inlier_count = mark_circle_inliers(pts, out.circle, params.inlier_tol, out.inliers);
  }
  const double frac = static_cast<double>(out.inlier_count) / static_cast<double>(n);
  if (out.inlier_count < 3 || frac < params.min_inlier_frac) {
    throw NoConsensus("ransac_fit_circle: inlier fraction below threshold");
  }
  return out;
}

inline double point_to_axis_distance(const Point3& p, const Cylinder& cyl) {
  return cyl.axis_dir.cross(p - cyl.axis_point).norm();
}

inline double cylinder_surface_residual(const Point3& p, const Cylinder& cyl) {
  return point_to_axis_distance(p, cyl) - cyl.radius;
}

struct CylinderFit {
  Cylinder cylinder;
  std::vector<bool> inliers;
};

inline constexpr std::size_t kMinCylinderPoints = 6;
inline constexpr double kMinCylinderSpan = 0.05;

namespace detail {

// Gauss-Newton on the orthogonal surface residual |u x (p - q)| - r over the
// masked points. Axis and axis point move in the plane normal to the axis.
inline void refine_cylinder(std::span<const Point3> points, const std::vector<bool>& mask, Vec3& u, Point3& q,
                            double& r) {
  using Vec5 = Eigen::Matrix<double, 5, 1>;
  using Mat5 = Eigen::Matrix<double, 5, 5>;
  for (int iter = 0; iter < 20; ++iter) {
    const Vec3 e1 = (std::abs(u.x()) < 0.9 ? u.cross(Vec3::UnitX()) : u.cross(Vec3::UnitY())).normalized();
    const Vec3 e2 = u.cross(e1);
    Mat5 jtj = Mat5::Zero();
    Vec5 jtr = Vec5::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!mask[i]) continue;
      const Vec3 w = points[i] - q;
      const Vec3 d = u.cross(w);
      const double dn = d.norm();
      if (dn < 1e-12) continue;
      const Vec3 n = d / dn;
      Vec5 j;
      j << n.dot(e1.cross(w)), n.dot(e2.cross(w)), -n.dot(e2), n.dot(e1), -1.0;
      jtj.noalias() += j * j.transpose();
      jtr += j * (dn - r);
    }
    Eigen::LDLT<Mat5> ldlt(jtj);
    if (ldlt.info() != Eigen::Success) return;
    const Vec5 step = ldlt.solve(-jtr);
    if (!step.allFinite()) return;
    u = (u + step(0) * e1 + step(1) * e2).normalized();
    q += step(2) * e1 + step(3) * e2;
    r += step(4);
    if (step.norm() < 1e-13) break;
  }
}

}  // namespace detail

/// Single-cylinder fit: principal axis, rotate axis to +z, RANSAC circle in
/// the x-y plane, rotate back, then a Gauss-Newton polish of (u, q, r) on the
/// circle inliers. The axis point sits at the mean axial height of the final
/// inliers.
inline CylinderFit fit_cylinder_detailed(std::span<const Point3> points, const RansacParams& params) {
  if (points.size() < kMinCylinderPoints) throw DegenerateInput("fit_cylinder: fewer than 6 points");
  const Vec3 pca_axis = estimate_axis(points);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : points) {
    const double s = pca_axis.dot(p);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (!(hi - lo > kMinCylinderSpan)) throw DegenerateInput("fit_cylinder: axial span too short");

  const Mat3 rot = axis_alignment_rotation(pca_axis);
  std::vector<Vec2> flat(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) flat[i] = (rot * points[i]).head<2>();
  CircleFit circle = ransac_fit_circle(flat, params);

  Vec3 u = pca_axis;
  Point3 q = rot.transpose() * Vec3(circle.circle.center.x(), circle.circle.center.y(), 0.0);
  double r = circle.circle.radius;
  std::vector<bool> mask = circle.inliers;
  const std::size_t ransac_count = circle.inlier_count;

  // Polish, then re-mark inliers against the polished model. A polish that
  // loses consensus is discarded.
  Vec3 u_ref = u;
  Point3 q_ref = q;
  double r_ref = r;
  detail::refine_cylinder(points, mask, u_ref, q_ref, r_ref);
  if (r_ref > 0.0 && std::isfinite(r_ref)) {
    std::vector<bool> mask_ref(points.size(), false);
    std::size_t count = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (std::abs(u_ref.cross(points[i] - q_ref).norm() - r_ref) <= params.inlier_tol) {
        mask_ref[i] = true;
        ++count;
      }
    }
    if (count >= ransac_count) {
      u = u_ref;
      q = q_ref;
      r = r_ref;
      mask = std::move(mask_ref);
    }
  }
  if (detail::sign_canonical_flip(u)) u = -u;

  double h_sum = 0.0;
  double sq_sum = 0.0;
  std::size_t nin = 0;
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double s = u.dot(points[i]);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    const double e = u.cross(points[i] - q).norm() - r;
    sq_sum += e * e;
    if (!mask[i]) continue;
    h_sum += s;
    ++nin;
  }
  if (nin == 0 || !(hi > lo)) throw NoConsensus("fit_cylinder: no inliers after refinement");

  CylinderFit out;
  Cylinder& c = out.cylinder;
  c.axis_dir = u;
  c.axis_point = q + (h_sum / static_cast<double>(nin) - u.dot(q)) * u;
  c.radius = r;
  c.extent_low = lo;
  c.extent_high = hi;
  c.fit_rms = std::sqrt(sq_sum / static_cast<double>(points.size()));
  out.inliers = std::move(mask);
  return out;
}

inline Cylinder fit_cylinder(std::span<const Point3> points, const RansacParams& params = {}) {
  return fit_cylinder_detailed(points, params).cylinder;
}

struct PlaneFit {
  Plane plane;
  double rms = 0.0;
};

/// Total least-squares plane (smallest-eigenvalue direction of the scatter).
inline PlaneFit fit_plane(std::span<const Point3> points) {
  if (points.size() < 3) throw DegenerateInput("fit_plane: fewer than 3 points");
  Point3 mean = Point3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  if (!(es.eigenvalues()(1) > 1e-18)) throw DegenerateInput("fit_plane: collinear points");
  PlaneFit out;
  out.plane.normal = es.eigenvectors().col(0).normalized();
  out.plane.offset = out.plane.normal.dot(mean);
  out.rms = std::sqrt(std::max(0.0, es.eigenvalues()(0)) / static_cast<double>(points.size()));
  return out;
}

}  // namespace trunklio
