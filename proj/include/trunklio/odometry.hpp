#pragma once

#include <span>
#include <vector>

#include "trunklio/fusion.hpp"
#include "trunklio/ins.hpp"
#include "trunklio/map.hpp"

namespace trunklio {

struct InitialSigmas {
  double att = 0.01;   // rad
  double pos = 0.01;   // m
  double vel = 0.05;   // m/s
  double ba = 0.02;    // m/s^2
  double bg = 1e-3;    // rad/s
};

struct OdometryConfig {
  FusionConfig fusion;
  NoiseParams noise;
  MapParams map;
  Extrinsics ext;
  int merge_frames = 5;
  InitialSigmas init;
};

struct OdometryResult {
  std::vector<PoseSample> trajectory;  // initial pose, then one per merged scan
  std::vector<ScanDiagnostics> diagnostics;
  CylinderMap map;
};

inline Cov15 initial_covariance(const InitialSigmas& s) {
  ErrorState d;
  d << Vec3::Constant(s.att * s.att), Vec3::Constant(s.pos * s.pos), Vec3::Constant(s.vel * s.vel),
      Vec3::Constant(s.ba * s.ba), Vec3::Constant(s.bg * s.bg);
  return d.asDiagonal();
}

/// Runs the full pipeline: buffers of `merge_frames` frames are merged and
/// motion-compensated with the INS prediction, then fused in one filter step.
inline OdometryResult run_odometry(std::span<const LabeledFrame> frames, std::span<const ImuSample> imu,
                                   const NavState& initial, const OdometryConfig& cfg) {
  if (cfg.merge_frames < 1) throw ConfigError("merge_frames must be at least 1");
  OdometryResult out{{}, {}, CylinderMap(cfg.map)};
  PlaneMap plane_map(cfg.fusion.plane_map);
  NavState x = initial;
  Cov15 p = initial_covariance(cfg.init);
  out.trajectory.push_back(pose_of(x));

  const auto m = static_cast<std::size_t>(cfg.merge_frames);
  for (std::size_t begin = 0; begin + m <= frames.size(); begin += m) {
    const auto buffer = frames.subspan(begin, m);
    const double t_end = buffer_end_time(buffer);
    if (imu.empty() || imu.back().stamp < t_end) break;

    PoseTrack track;
    x = integrate_imu(x, imu, t_end, cfg.noise.gravity, &track,
                      [&](const NavState& xs, const ImuSample& s, double dt) {
                        p = propagate_covariance(p, xs, s, dt, cfg.noise);
                      });
    renormalize(x);
    const LabeledFrame scan = compensate(buffer, track, t_end, cfg.ext);
    out.diagnostics.push_back(process_scan(scan, out.map, plane_map, x, p, cfg.fusion));
    out.trajectory.push_back(pose_of(x));
  }
  return out;
}

}  // namespace trunklio
