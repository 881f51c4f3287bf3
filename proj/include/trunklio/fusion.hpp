#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trunklio/association.hpp"
#include "trunklio/geometry.hpp"
#include "trunklio/ins.hpp"
#include "trunklio/map.hpp"

namespace trunklio {

enum class Mode { OriLio, SeLioRu, SeLio };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::OriLio: return "ori-lio";
    case Mode::SeLioRu: return "se-lio-ru";
    case Mode::SeLio: return "se-lio";
  }
  return "se-lio";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "ori-lio" || s == "OriLio") return Mode::OriLio;
  if (s == "se-lio-ru" || s == "SeLioRu") return Mode::SeLioRu;
  if (s == "se-lio" || s == "SeLio") return Mode::SeLio;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected ori-lio, se-lio-ru or se-lio)");
}

struct FilterConfig {
  int max_iterations = 5;
  double convergence_tol = 1e-6;
  double sigma_plane = 0.05;
  Mode mode = Mode::SeLio;
};

/// Drops foliage and moving-object returns, keeping the order of the rest.
inline LabeledFrame remove_unstructured(const LabeledFrame& frame) {
  LabeledFrame out;
  out.stamp = frame.stamp;
  out.period = frame.period;
  out.points.reserve(frame.points.size());
  for (const auto& p : frame.points) {
    if (p.label == SemanticClass::TreeLeaves || p.label == SemanticClass::DynamicObject) continue;
    out.points.push_back(p);
  }
  return out;
}

using Row15 = Eigen::Matrix<double, 1, kStateDim>;

struct ResidualJacobian {
  double h = 0.0;
  Row15 H = Row15::Zero();
};

/// Point-to-cylinder residual (axis distance minus radius) of a body-frame
/// point under state x, with its Jacobian w.r.t. the error state.
inline ResidualJacobian cylinder_residual_jacobian(const NavState& x, const Point3& p_body, const Cylinder& cyl) {
  const Point3 p_world = x.rot * p_body + x.pos;
  const Mat3 ux = so3::hat(cyl.axis_dir);
  const Vec3 w = ux * (p_world - cyl.axis_point);
  const double d = w.norm();
  if (d < 1e-9) throw SingularResidual("cylinder residual: point lies on the axis");
  const Eigen::RowVector3d n = w.transpose() / d;
  ResidualJacobian out;
  out.h = d - cyl.radius;
  const Eigen::RowVector3d n_ux = n * ux;
  out.H.segment<3>(kRot) = -n_ux * x.rot * so3::hat(p_body);
  out.H.segment<3>(kPos) = n_ux;
  return out;
}

/// Signed point-to-plane distance of a body-frame point and its Jacobian.
inline ResidualJacobian plane_residual_jacobian(const NavState& x, const Point3& p_body, const Plane& plane) {
  const Point3 p_world = x.rot * p_body + x.pos;
  ResidualJacobian out;
  out.h = plane.signed_distance(p_world);
  const Eigen::RowVector3d u = plane.normal.transpose();
  out.H.segment<3>(kRot) = -u * x.rot * so3::hat(p_body);
  out.H.segment<3>(kPos) = u;
  return out;
}

struct CylinderObservation {
  Point3 p_body = Point3::Zero();
  Cylinder cylinder;
  double var = 1e-4;
};

struct PlaneObservation {
  Point3 p_body = Point3::Zero();
  Plane plane;
  double var = 2.5e-3;
};

struct IeskfResult {
  NavState state;
  Cov15 cov = Cov15::Identity();
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  std::size_t used_planes = 0;
  std::size_t used_cylinders = 0;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

namespace detail {

struct Accumulated {
  Cov15 info = Cov15::Zero();
  ErrorState grad = ErrorState::Zero();
  double cost = 0.0;
  std::size_t planes = 0;
  std::size_t cylinders = 0;
};

inline void accumulate(Accumulated& acc, const ResidualJacobian& rj, double var) {
  const double w = 1.0 / var;
  acc.info.noalias() += w * rj.H.transpose() * rj.H;
  acc.grad.noalias() += w * rj.H.transpose() * rj.h;
  acc.cost += w * rj.h * rj.h;
}

// Linearizes every observation at x. Observations whose cylinder residual is
// singular at x are skipped for this linearization.
inline Accumulated linearize(const NavState& x, std::span<const CylinderObservation> cyl,
                             std::span<const PlaneObservation> planes) {
  Accumulated acc;
  for (const auto& o : planes) {
    accumulate(acc, plane_residual_jacobian(x, o.p_body, o.plane), o.var);
    ++acc.planes;
  }
  for (const auto& o : cyl) {
    try {
      accumulate(acc, cylinder_residual_jacobian(x, o.p_body, o.cylinder), o.var);
      ++acc.cylinders;
    } catch (const SingularResidual&) {
    }
  }
  return acc;
}

// A = d(x boxplus delta boxminus prior)/d delta at delta = 0.
inline Cov15 prior_jacobian(const ErrorState& e) {
  Cov15 a = Cov15::Identity();
  a.block<3, 3>(kRot, kRot) = so3::right_jacobian_inv(e.segment<3>(kRot));
  return a;
}

inline double prior_cost(const ErrorState& e, const Eigen::LLT<Cov15>& p_llt) { return e.dot(p_llt.solve(e)); }

}  // namespace detail

/// Iterated error-state update. Each iteration relinearizes all residuals at
/// the current estimate and takes the Gauss-Newton step of
///   |x - prior|^2_P + sum |h_i + H_i dx|^2 / var_i,
/// written in information form. The returned covariance is the inverse of the
/// final normal matrix.
inline IeskfResult ieskf_update(const NavState& prior, const Cov15& p, std::span<const CylinderObservation> cyl,
                                std::span<const PlaneObservation> planes, const FilterConfig& cfg) {
  IeskfResult res;
  res.state = prior;
  res.cov = p;
  if (cyl.empty() && planes.empty()) {
    res.converged = true;
    return res;
  }
  if (!is_psd(p)) throw NotPSD("ieskf_update: prior covariance is not symmetric PSD");
  const Eigen::LLT<Cov15> p_llt(0.5 * (p + p.transpose()));
  if (p_llt.info() != Eigen::Success) throw NotPSD("ieskf_update: prior covariance is singular");
  const Cov15 p_inv = p_llt.solve(Cov15::Identity());

  NavState x = prior;
  res.objective_before = detail::linearize(prior, cyl, planes).cost;
  double prev_step = std::numeric_limits<double>::infinity();
  int growth = 0;
  Cov15 info_final = p_inv;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const ErrorState e = boxminus(x, prior);
    const Cov15 a = detail::prior_jacobian(e);
    detail::Accumulated acc = detail::linearize(x, cyl, planes);
    const Cov15 prior_info = a.transpose() * p_inv * a;
    const Cov15 info = prior_info + acc.info;
    const ErrorState grad = a.transpose() * (p_inv * e) + acc.grad;
    const Eigen::LLT<Cov15> llt(0.5 * (info + info.transpose()));
    if (llt.info() != Eigen::Success) throw NotPSD("ieskf_update: normal matrix is not positive definite");
    const ErrorState dx = -llt.solve(grad);
    info_final = info;
    res.used_planes = acc.planes;
    res.used_cylinders = acc.cylinders;
    res.iterations = it;

    const double step = dx.norm();
    growth = step > prev_step ? growth + 1 : 0;
    if (growth >= 3) {
      res.state = prior;
      res.cov = p;
      res.diverged = true;
      res.objective_after = res.objective_before;
      return res;
    }
    prev_step = step;
    x = boxplus(x, dx);
    if (step < cfg.convergence_tol) {
      res.converged = true;
      break;
    }
  }
  res.state = x;
  res.state.rot = so3::project(x.rot);
  const Eigen::LLT<Cov15> info_llt(0.5 * (info_final + info_final.transpose()));
  Cov15 post = info_llt.solve(Cov15::Identity());
  res.cov = 0.5 * (post + post.transpose());
  res.objective_after = detail::linearize(res.state, cyl, planes).cost +
                        detail::prior_cost(boxminus(res.state, prior), p_llt);
  return res;
}

struct PlaneMapParams {
  double voxel = 0.25;          // downsampling resolution of stored points
  std::size_t neighbors = 5;    // points per local plane fit
  double max_plane_rms = 0.05;  // accept a local plane below this RMS
  double max_neighbor_dist = 1.0;
  double residual_gate = 0.3;  // drop plane observations with larger |h|
};

/// Downsampled world point map for local plane fitting. Keeps the first point
/// that lands in each voxel; neighbor search scans the 27 surrounding cells of
/// a coarser grid.
class PlaneMap {
 public:
  explicit PlaneMap(PlaneMapParams params = {}) : params_(params), cell_(2.0 * params.voxel) {}

  const PlaneMapParams& params() const { return params_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  void insert(const Point3& p) {
    const auto vk = detail::cell_of(p, params_.voxel);
    if (!voxels_.emplace(vk, 0).second) return;
    cells_[detail::cell_of(p, cell_)].push_back(p);
    ++count_;
  }

  /// Local plane around `q` from its nearest stored points, if they are
  /// close enough and planar enough.
  std::optional<PlaneFit> local_plane(const Point3& q) const {
    const auto c = detail::cell_of(q, cell_);
    scratch_.clear();
    const double max_d2 = params_.max_neighbor_dist * params_.max_neighbor_dist;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (const auto& p : it->second) {
            const double d2 = (p - q).squaredNorm();
            if (d2 <= max_d2) scratch_.push_back({d2, p});
          }
        }
    const std::size_t k = params_.neighbors;
    if (scratch_.size() < k) return std::nullopt;
    std::partial_sort(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(k), scratch_.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.d2 != b.d2) return a.d2 < b.d2;
                        return std::tie(a.p.x(), a.p.y(), a.p.z()) < std::tie(b.p.x(), b.p.y(), b.p.z());
                      });
    PointList near;
    near.reserve(k);
    for (std::size_t i = 0; i < k; ++i) near.push_back(scratch_[i].p);
    try {
      PlaneFit fit = fit_plane(near);
      if (fit.rms < params_.max_plane_rms) return fit;
    } catch (const DegenerateInput&) {
    }
    return std::nullopt;
  }

 private:
  struct Candidate {
    double d2;
    Point3 p;
  };

  PlaneMapParams params_;
  double cell_;
  std::unordered_map<detail::CellKey, char, detail::CellKeyHash> voxels_;
  std::unordered_map<detail::CellKey, PointList, detail::CellKeyHash> cells_;
  std::size_t count_ = 0;
  mutable std::vector<Candidate> scratch_;
};

struct FusionConfig {
  FilterConfig filter;
  PlaneMapParams plane_map;
  double assoc_threshold = 1.0;
  double gate_factor = 3.0;  // cylinder gate = gate_factor * eps_max
  double sigma_c_floor_sq = 1e-6;
  double scan_voxel = 0.0;  // downsample observation points; 0 keeps all
};

struct ScanDiagnostics {
  double stamp = 0.0;
  Mode mode = Mode::SeLio;
  int iterations = 0;
  std::size_t n_plane = 0;
  std::size_t n_cylinder = 0;
  double objective_before = 0.0;
  double objective_after = 0.0;
  bool diverged = false;
  NavState pose;
};

inline void write_diagnostics_header(std::ostream& os) {
  os << "t,mode,iterations,n_plane,n_cylinder,objective_before,objective_after,diverged,x,y,z,qw,qx,qy,qz\n";
}

inline void write_diagnostics(std::ostream& os, const ScanDiagnostics& d) {
  const Eigen::Quaterniond q(d.pose.rot);
  os << d.stamp << ',' << to_string(d.mode) << ',' << d.iterations << ',' << d.n_plane << ',' << d.n_cylinder << ','
     << d.objective_before << ',' << d.objective_after << ',' << (d.diverged ? 1 : 0) << ',' << d.pose.pos.x() << ','
     << d.pose.pos.y() << ',' << d.pose.pos.z() << ',' << q.w() << ',' << q.x() << ',' << q.y() << ',' << q.z()
     << '\n';
}

namespace detail {

inline std::vector<const LabeledPoint*> voxel_subsample(const std::vector<LabeledPoint>& pts, double voxel) {
  std::vector<const LabeledPoint*> out;
  out.reserve(pts.size());
  if (voxel <= 0.0) {
    for (const auto& p : pts) out.push_back(&p);
    return out;
  }
  std::unordered_map<CellKey, char, CellKeyHash> seen;
  seen.reserve(pts.size());
  for (const auto& p : pts) {
    if (seen.emplace(cell_of(p.p, voxel), 0).second) out.push_back(&p);
  }
  return out;
}

}  // namespace detail

/// One filter step on a merged, motion-compensated scan (body frame at the
/// state's epoch). `x`/`p` hold the INS prior on entry and the posterior on
/// return; the plane map and (SeLio) cylinder map are updated in place.
inline ScanDiagnostics process_scan(const LabeledFrame& scan, CylinderMap& cyl_map, PlaneMap& plane_map, NavState& x,
                                    Cov15& p, const FusionConfig& cfg) {
  const Mode mode = cfg.filter.mode;
  const LabeledFrame kept = mode == Mode::OriLio ? scan : remove_unstructured(scan);
  const auto sample = detail::voxel_subsample(kept.points, cfg.scan_voxel);

  const auto& trees = cyl_map.trees();
  const double eps_max = cyl_map.params().piecewise.eps_max;
  const double var_plane = cfg.filter.sigma_plane * cfg.filter.sigma_plane;

  std::vector<CylinderObservation> cyl_obs;
  std::vector<PlaneObservation> plane_obs;
  for (const LabeledPoint* lp : sample) {
    const Point3 pw = x.rot * lp->p + x.pos;
    if (mode == Mode::SeLio && lp->label == SemanticClass::PoleLike && !trees.empty()) {
      if (auto a = associate_point(pw, trees, cfg.assoc_threshold)) {
        if (std::abs(cylinder_surface_residual(pw, a->cylinder)) <= cfg.gate_factor * eps_max &&
            point_to_axis_distance(pw, a->cylinder) >= 1e-9) {
          const double var = std::max(a->cylinder.fit_rms * a->cylinder.fit_rms, cfg.sigma_c_floor_sq);
          cyl_obs.push_back({lp->p, a->cylinder, var});
          continue;
        }
      }
    }
    if (plane_map.empty()) continue;
    if (auto fit = plane_map.local_plane(pw)) {
      if (std::abs(fit->plane.signed_distance(pw)) <= cfg.plane_map.residual_gate) {
        plane_obs.push_back({lp->p, fit->plane, var_plane});
      }
    }
  }

  const IeskfResult r = ieskf_update(x, p, cyl_obs, plane_obs, cfg.filter);
  x = r.state;
  p = r.cov;

  for (const auto& lp : kept.points) plane_map.insert(x.rot * lp.p + x.pos);
  if (mode == Mode::SeLio) {
    PointList poles;
    for (const auto& lp : kept.points) {
      if (lp.label == SemanticClass::PoleLike) poles.push_back(x.rot * lp.p + x.pos);
    }
    update_map(poles, cyl_map);
  }

  ScanDiagnostics d;
  d.stamp = x.stamp;
  d.mode = mode;
  d.iterations = r.iterations;
  d.n_plane = r.used_planes;
  d.n_cylinder = r.used_cylinders;
  d.objective_before = r.objective_before;
  d.objective_after = r.objective_after;
  d.diverged = r.diverged;
  d.pose = x;
  return d;
}

}  // namespace trunklio
