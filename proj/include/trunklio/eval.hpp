#pragma once

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trunklio/ins.hpp"
#include "trunklio/so3.hpp"

namespace trunklio::eval {

inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct PosePair {
  PoseSample est;
  PoseSample truth;
};

/// Pairs each estimate with the truth sample nearest in time, if within
/// `max_dt`. Truth must be sorted by time.
inline std::vector<PosePair> associate(std::span<const PoseSample> est, std::span<const PoseSample> truth,
                                       double max_dt = 0.01) {
  std::vector<PosePair> out;
  if (truth.empty()) return out;
  for (const auto& e : est) {
    auto it = std::lower_bound(truth.begin(), truth.end(), e.stamp,
                               [](const PoseSample& s, double t) { return s.stamp < t; });
    const PoseSample* best = nullptr;
    double best_dt = std::numeric_limits<double>::infinity();
    if (it != truth.end()) {
      best = &*it;
      best_dt = std::abs(it->stamp - e.stamp);
    }
    if (it != truth.begin()) {
      const auto prev = it - 1;
      if (std::abs(prev->stamp - e.stamp) <= best_dt) {
        best = &*prev;
        best_dt = std::abs(prev->stamp - e.stamp);
      }
    }
    if (best && best_dt <= max_dt) out.push_back({e, *best});
  }
  return out;
}

struct RigidTransform {
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();
};

/// Least-squares rigid transform (no scale) taking estimate positions onto
/// truth positions.
inline RigidTransform align_positions(std::span<const PosePair> pairs) {
  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(pairs.size()));
  Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    src.col(static_cast<Eigen::Index>(i)) = pairs[i].est.pos;
    dst.col(static_cast<Eigen::Index>(i)) = pairs[i].truth.pos;
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  return {t.block<3, 3>(0, 0), t.block<3, 1>(0, 3)};
}

/// Rotation R minimizing the summed squared geodesic distance between
/// R * est_i and truth_i (Karcher mean of truth_i * est_i^T).
inline Mat3 align_rotations(std::span<const PosePair> pairs) {
  Mat3 sum = Mat3::Zero();
  for (const auto& p : pairs) sum += p.truth.rot * p.est.rot.transpose();
  Mat3 r = so3::project(sum);
  for (int it = 0; it < 20; ++it) {
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pairs) mean += so3::log(r.transpose() * p.truth.rot * p.est.rot.transpose());
    mean /= static_cast<double>(pairs.size());
    r = r * so3::exp(mean);
    if (mean.norm() < 1e-15) break;
  }
  return r;
}

struct AbsoluteErrors {
  double ate = 0.0;  // m
  double are = 0.0;  // deg
  std::size_t pairs = 0;
};

inline AbsoluteErrors compute_ate_are(std::span<const PoseSample> est, std::span<const PoseSample> truth,
                                      double max_dt = 0.01) {
  const auto pairs = associate(est, truth, max_dt);
  if (pairs.size() < 2) throw NoOverlap("compute_ate_are: fewer than 2 associated poses");
  const RigidTransform a = align_positions(pairs);
  const Mat3 ra = align_rotations(pairs);
  double se = 0.0, sa = 0.0;
  for (const auto& p : pairs) {
    se += (a.rot * p.est.pos + a.trans - p.truth.pos).squaredNorm();
    const double ang = so3::angle_between(ra * p.est.rot, p.truth.rot);
    sa += ang * ang;
  }
  const double n = static_cast<double>(pairs.size());
  return {std::sqrt(se / n), std::sqrt(sa / n) * kRadToDeg, pairs.size()};
}

struct SegmentErrors {
  double distance = 0.0;  // m
  double rte = 0.0;       // m, RMS
  double rre = 0.0;       // deg, RMS
  std::size_t segments = 0;

  bool operator==(const SegmentErrors&) const = default;
};

/// For each start pose, the first later pose whose accumulated truth path
/// length reaches `distance`; relative motions are compared in the start
/// frame.
inline SegmentErrors compute_rte_rre(std::span<const PoseSample> est, std::span<const PoseSample> truth,
                                     double distance, double max_dt = 0.01) {
  const auto pairs = associate(est, truth, max_dt);
  std::vector<double> s(pairs.size(), 0.0);
  for (std::size_t i = 1; i < pairs.size(); ++i) s[i] = s[i - 1] + (pairs[i].truth.pos - pairs[i - 1].truth.pos).norm();
  SegmentErrors out;
  out.distance = distance;
  double se = 0.0, sa = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    j = std::max(j, i + 1);
    while (j < pairs.size() && s[j] - s[i] < distance) ++j;
    if (j >= pairs.size()) break;
    const auto& a = pairs[i];
    const auto& b = pairs[j];
    const Mat3 dr_est = a.est.rot.transpose() * b.est.rot;
    const Vec3 dt_est = a.est.rot.transpose() * (b.est.pos - a.est.pos);
    const Mat3 dr_gt = a.truth.rot.transpose() * b.truth.rot;
    const Vec3 dt_gt = a.truth.rot.transpose() * (b.truth.pos - a.truth.pos);
    // E = T_gt^-1 * T_est
    const Vec3 e_t = dr_gt.transpose() * (dt_est - dt_gt);
    const double e_r = so3::angle_between(dr_gt, dr_est);
    se += e_t.squaredNorm();
    sa += e_r * e_r;
    ++out.segments;
  }
  if (out.segments == 0) throw NoOverlap("compute_rte_rre: trajectory shorter than the segment length");
  const double n = static_cast<double>(out.segments);
  out.rte = std::sqrt(se / n);
  out.rre = std::sqrt(sa / n) * kRadToDeg;
  return out;
}

struct MetricReport {
  std::string label;  // run name, e.g. "se-lio" or "depth-3"
  double ate = 0.0;
  double are = 0.0;
  std::size_t pairs = 0;
  std::vector<SegmentErrors> relative;  // only distances the run covers

  bool operator==(const MetricReport&) const = default;
};

inline MetricReport evaluate(std::string label, std::span<const PoseSample> est, std::span<const PoseSample> truth,
                             std::span<const double> distances) {
  MetricReport r;
  r.label = std::move(label);
  const auto abs = compute_ate_are(est, truth);
  r.ate = abs.ate;
  r.are = abs.are;
  r.pairs = abs.pairs;
  for (double d : distances) {
    try {
      r.relative.push_back(compute_rte_rre(est, truth, d));
    } catch (const NoOverlap&) {
    }
  }
  return r;
}

// Report CSV: one row per (label, metric). Columns:
//   label     run name
//   metric    ate_m | are_deg | pairs | rte_m | rre_deg | segments
//   distance  segment length in m for relative metrics, empty otherwise
//   value     full-precision number
inline void write_reports(std::ostream& os, std::span<const MetricReport> reports) {
  os << std::setprecision(17);
  os << "label,metric,distance,value\n";
  for (const auto& r : reports) {
    os << r.label << ",ate_m,," << r.ate << '\n';
    os << r.label << ",are_deg,," << r.are << '\n';
    os << r.label << ",pairs,," << r.pairs << '\n';
    for (const auto& s : r.relative) {
      os << r.label << ",rte_m," << s.distance << ',' << s.rte << '\n';
      os << r.label << ",rre_deg," << s.distance << ',' << s.rre << '\n';
      os << r.label << ",segments," << s.distance << ',' << s.segments << '\n';
    }
  }
}

inline std::vector<MetricReport> read_reports(std::istream& is) {
  std::vector<MetricReport> out;
  std::string line;
  if (!std::getline(is, line) || line != "label,metric,distance,value") throw Error("report: bad header");
  auto segment = [](MetricReport& r, double d) -> SegmentErrors& {
    for (auto& s : r.relative)
      if (s.distance == d) return s;
    r.relative.push_back({});
    r.relative.back().distance = d;
    return r.relative.back();
  };
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() == 3 && line.back() == ',') f.emplace_back();
    if (f.size() != 4) throw Error("report line " + std::to_string(line_no) + ": expected 4 fields");
    if (out.empty() || out.back().label != f[0]) {
      out.emplace_back();
      out.back().label = f[0];
    }
    MetricReport& r = out.back();
    const std::string& m = f[1];
    if (m == "ate_m") {
      r.ate = std::stod(f[3]);
    } else if (m == "are_deg") {
      r.are = std::stod(f[3]);
    } else if (m == "pairs") {
      r.pairs = std::stoull(f[3]);
    } else if (m == "rte_m") {
      segment(r, std::stod(f[2])).rte = std::stod(f[3]);
    } else if (m == "rre_deg") {
      segment(r, std::stod(f[2])).rre = std::stod(f[3]);
    } else if (m == "segments") {
      segment(r, std::stod(f[2])).segments = std::stoull(f[3]);
    } else {
      throw Error("report line " + std::to_string(line_no) + ": unknown metric '" + m + "'");
    }
  }
  return out;
}

/// Fixed-width table for terminals.
inline void write_table(std::ostream& os, std::span<const MetricReport> reports, std::span<const double> distances) {
  std::ostringstream hdr;
  hdr << std::left << std::setw(12) << "run" << std::right << std::setw(10) << "ATE[m]" << std::setw(10) << "ARE[deg]";
  for (double d : distances) {
    std::ostringstream a, b;
    a << "RTE" << d << "[m]";
    b << "RRE" << d << "[deg]";
    hdr << std::setw(13) << a.str() << std::setw(14) << b.str();
  }
  os << hdr.str() << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(12) << r.label << std::right << std::fixed << std::setprecision(4) << std::setw(10)
       << r.ate << std::setw(10) << r.are;
    for (double d : distances) {
      const auto it = std::find_if(r.relative.begin(), r.relative.end(),
                                   [&](const SegmentErrors& s) { return s.distance == d; });
      if (it == r.relative.end()) {
        os << std::setw(13) << "-" << std::setw(14) << "-";
      } else {
        os << std::setw(13) << it->rte << std::setw(14) << it->rre;
      }
    }
    os << '\n';
    os.unsetf(std::ios::fixed);
  }
}

}  // namespace trunklio::eval
