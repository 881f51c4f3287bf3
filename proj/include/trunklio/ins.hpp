#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "trunklio/common.hpp"
#include "trunklio/so3.hpp"

namespace trunklio {

inline constexpr double kGravity = 9.80665;

struct NavState {
  Mat3 rot = Mat3::Identity();  // body to world
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  Vec3 bias_acc = Vec3::Zero();
  Vec3 bias_gyr = Vec3::Zero();
  double stamp = 0.0;
};

// Error-state layout: [dtheta, dp, dv, dba, dbg].
inline constexpr int kStateDim = 15;
inline constexpr int kRot = 0;
inline constexpr int kPos = 3;
inline constexpr int kVel = 6;
inline constexpr int kBa = 9;
inline constexpr int kBg = 12;

using ErrorState = Eigen::Matrix<double, kStateDim, 1>;
using Cov15 = Eigen::Matrix<double, kStateDim, kStateDim>;

/// Retraction. Attitude errors are applied on the right (body frame).
inline NavState boxplus(const NavState& x, const ErrorState& dx) {
  NavState out = x;
  out.rot = x.rot * so3::exp(dx.segment<3>(kRot));
  out.pos += dx.segment<3>(kPos);
  out.vel += dx.segment<3>(kVel);
  out.bias_acc += dx.segment<3>(kBa);
  out.bias_gyr += dx.segment<3>(kBg);
  return out;
}

inline ErrorState boxminus(const NavState& x, const NavState& ref) {
  ErrorState d;
  d.segment<3>(kRot) = so3::log(ref.rot.transpose() * x.rot);
  d.segment<3>(kPos) = x.pos - ref.pos;
  d.segment<3>(kVel) = x.vel - ref.vel;
  d.segment<3>(kBa) = x.bias_acc - ref.bias_acc;
  d.segment<3>(kBg) = x.bias_gyr - ref.bias_gyr;
  return d;
}

struct ImuSample {
  double stamp = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // specific force, m/s^2, body frame
};

struct NoiseParams {
  double corr_time_acc = 3600.0;  // T_a
  double corr_time_gyr = 3600.0;  // T_g
  double sigma_bias_acc = 1e-4;   // m/s^2 per sqrt(s)
  double sigma_bias_gyr = 1e-6;   // rad/s per sqrt(s)
  double sigma_att = 1e-3;        // rad per sqrt(s)
  double sigma_vel = 1e-2;        // m/s per sqrt(s)
  Vec3 gravity = Vec3(0.0, 0.0, -kGravity);
};

/// LiDAR-to-body extrinsics, applied as rot * (p_l - trans).
struct Extrinsics {
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();
};

inline Point3 lidar_to_body(const Point3& p_l, const Extrinsics& ext) { return ext.rot * (p_l - ext.trans); }
inline Point3 body_to_lidar(const Point3& p_b, const Extrinsics& ext) {
  return ext.rot.transpose() * p_b + ext.trans;
}

/// One strapdown step. Attitude uses the first-order exponential of the
/// bias-corrected rate; the specific force is rotated with the mid-interval
/// attitude.
inline NavState mechanize(const NavState& x, const ImuSample& s, double dt, const Vec3& gravity) {
  if (!(dt > 0.0)) throw NonMonotoneTime("mechanize: dt must be positive");
  const Vec3 w = s.gyro - x.bias_gyr;
  const Vec3 f = s.accel - x.bias_acc;
  const Mat3 r_mid = x.rot * so3::exp(0.5 * dt * w);
  const Vec3 acc = r_mid * f + gravity;
  NavState out = x;
  out.rot = x.rot * so3::exp(dt * w);
  out.pos = x.pos + x.vel * dt + 0.5 * acc * dt * dt;
  out.vel = x.vel + acc * dt;
  out.stamp = x.stamp + dt;
  return out;
}

inline Vec3 gauss_markov_step(const Vec3& bias, double dt, double corr_time) {
  return (1.0 - dt / corr_time) * bias;
}

/// Discrete error-state transition for one IMU interval.
inline Cov15 transition_matrix(const NavState& x, const ImuSample& s, double dt, const NoiseParams& noise) {
  const Vec3 w = s.gyro - x.bias_gyr;
  const Vec3 f = s.accel - x.bias_acc;
  Cov15 phi = Cov15::Identity();
  phi.block<3, 3>(kRot, kRot) = so3::exp(-dt * w);
  phi.block<3, 3>(kRot, kBg) = -Mat3::Identity() * dt;
  phi.block<3, 3>(kPos, kVel) = Mat3::Identity() * dt;
  phi.block<3, 3>(kVel, kRot) = -x.rot * so3::hat(f) * dt;
  phi.block<3, 3>(kVel, kBa) = -x.rot * dt;
  phi.block<3, 3>(kBa, kBa) = (1.0 - dt / noise.corr_time_acc) * Mat3::Identity();
  phi.block<3, 3>(kBg, kBg) = (1.0 - dt / noise.corr_time_gyr) * Mat3::Identity();
  return phi;
}

inline Cov15 process_noise(double dt, const NoiseParams& noise) {
  Cov15 q = Cov15::Zero();
  q.block<3, 3>(kRot, kRot).diagonal().setConstant(noise.sigma_att * noise.sigma_att * dt);
  q.block<3, 3>(kVel, kVel).diagonal().setConstant(noise.sigma_vel * noise.sigma_vel * dt);
  q.block<3, 3>(kBa, kBa).diagonal().setConstant(noise.sigma_bias_acc * noise.sigma_bias_acc * dt);
  q.block<3, 3>(kBg, kBg).diagonal().setConstant(noise.sigma_bias_gyr * noise.sigma_bias_gyr * dt);
  return q;
}

/// Symmetric and positive semidefinite up to `rel_tol` (relative to the
/// trace).
inline bool is_psd(const Cov15& p, double rel_tol = 1e-9) {
  if (!p.allFinite()) return false;
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > rel_tol * scale) return false;
  const double tr = std::max(p.trace(), 0.0);
  Cov15 shifted = 0.5 * (p + p.transpose());
  shifted.diagonal().array() += rel_tol * tr + 1e-300;
  Eigen::LLT<Cov15> llt(shifted);
  return llt.info() == Eigen::Success;
}

inline Cov15 propagate_covariance(const Cov15& p, const NavState& x, const ImuSample& s, double dt,
                                  const NoiseParams& noise) {
  if (!is_psd(p)) throw NotPSD("propagate_covariance: input covariance is not symmetric PSD");
  const Cov15 phi = transition_matrix(x, s, dt, noise);
  Cov15 out = phi * p * phi.transpose() + process_noise(dt, noise);
  return 0.5 * (out + out.transpose());
}

inline void renormalize(NavState& x) { x.rot = so3::project(x.rot); }

struct PoseSample {
  double stamp = 0.0;
  Mat3 rot = Mat3::Identity();
  Vec3 pos = Vec3::Zero();
};

/// Time-ordered poses with geodesic/linear interpolation between samples.
class PoseTrack {
 public:
  PoseTrack() = default;
  explicit PoseTrack(std::vector<PoseSample> samples) : samples_(std::move(samples)) {}

  void push_back(const PoseSample& s) { samples_.push_back(s); }
  bool empty() const { return samples_.empty(); }
  const std::vector<PoseSample>& samples() const { return samples_; }
  double begin_time() const { return samples_.front().stamp; }
  double end_time() const { return samples_.back().stamp; }

  PoseSample at(double t) const {
    // Stamps assembled from frame indices and periods may miss the span ends
    // by rounding; snap those.
    constexpr double kSnap = 1e-9;
    if (samples_.empty() || t < samples_.front().stamp - kSnap || t > samples_.back().stamp + kSnap) {
      throw TimeGap("pose requested outside the covered time span");
    }
    if (t <= samples_.front().stamp) return samples_.front();
    if (t >= samples_.back().stamp) return samples_.back();
    auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                               [](const PoseSample& s, double v) { return s.stamp < v; });
    if (it->stamp == t) return *it;
    const PoseSample& b = *it;
    const PoseSample& a = *(it - 1);
    const double s = (t - a.stamp) / (b.stamp - a.stamp);
    return PoseSample{t, so3::interpolate(a.rot, b.rot, s), a.pos + s * (b.pos - a.pos)};
  }

 private:
  std::vector<PoseSample> samples_;
};

inline PoseSample pose_of(const NavState& x) { return {x.stamp, x.rot, x.pos}; }

/// Index of the sample governing time t (last sample at or before t).
inline std::size_t governing_sample(std::span<const ImuSample> imu, double t) {
  auto it = std::upper_bound(imu.begin(), imu.end(), t, [](double v, const ImuSample& s) { return v < s.stamp; });
  if (it == imu.begin()) throw TimeGap("no IMU sample at or before requested time");
  return static_cast<std::size_t>(it - imu.begin()) - 1;
}

/// Mechanizes from `start` to `t_end` with zero-order hold on each IMU sample,
/// visiting every IMU epoch in between. `on_step(state_before, sample, dt)` is
/// called before each step.
template <typename OnStep>
NavState integrate_imu(const NavState& start, std::span<const ImuSample> imu, double t_end, const Vec3& gravity,
                       PoseTrack* track, OnStep&& on_step) {
  if (imu.empty() || imu.back().stamp < t_end) throw TimeGap("IMU stream does not reach the requested end time");
  NavState x = start;
  if (track) track->push_back(pose_of(x));
  if (t_end <= start.stamp) return x;
  std::size_t k = governing_sample(imu, start.stamp);
  while (x.stamp < t_end) {
    const double next = (k + 1 < imu.size()) ? std::min(imu[k + 1].stamp, t_end) : t_end;
    const double dt = next - x.stamp;
    if (dt > 0.0) {
      on_step(x, imu[k], dt);
      x = mechanize(x, imu[k], dt, gravity);
      x.stamp = next;  // avoid accumulated rounding in the clock
      if (track) track->push_back(pose_of(x));
    }
    ++k;
    if (k >= imu.size()) break;
  }
  return x;
}

inline NavState integrate_imu(const NavState& start, std::span<const ImuSample> imu, double t_end,
                              const Vec3& gravity, PoseTrack* track = nullptr) {
  return integrate_imu(start, imu, t_end, gravity, track, [](const NavState&, const ImuSample&, double) {});
}

/// Re-expresses every point of `frames` (LiDAR frame, per-point times) in the
/// body frame at time t_end using the pose track.
inline LabeledFrame compensate(std::span<const LabeledFrame> frames, const PoseTrack& track, double t_end,
                               const Extrinsics& ext = {}) {
  const PoseSample end = track.at(t_end);
  const Mat3 rot_end_t = end.rot.transpose();
  LabeledFrame out;
  out.stamp = t_end;
  out.period = 0.0;
  std::size_t total = 0;
  for (const auto& f : frames) total += f.points.size();
  out.points.reserve(total);
  for (const auto& f : frames) {
    for (const auto& lp : f.points) {
      const PoseSample at = track.at(f.stamp + lp.t_offset);
      LabeledPoint q = lp;
      q.p = rot_end_t * (at.rot * lidar_to_body(lp.p, ext) + at.pos - end.pos);
      q.t_offset = 0.0;
      out.points.push_back(q);
    }
  }
  return out;
}

inline double buffer_end_time(std::span<const LabeledFrame> frames) {
  double t = -std::numeric_limits<double>::infinity();
  for (const auto& f : frames) t = std::max(t, f.stamp + f.period);
  return t;
}

/// Merges a buffer of frames into one cloud expressed at the end of the last
/// frame, using INS poses mechanized from `start`.
inline LabeledFrame merge_and_compensate(std::span<const LabeledFrame> frames, std::span<const ImuSample> imu,
                                         const NavState& start, const Vec3& gravity, const Extrinsics& ext = {}) {
  if (frames.empty()) return LabeledFrame{start.stamp, 0.0, {}};
  const double t_end = buffer_end_time(frames);
  double t_min = t_end;
  for (const auto& f : frames)
    for (const auto& p : f.points) t_min = std::min(t_min, f.stamp + p.t_offset);
  if (t_min < start.stamp || imu.empty() || imu.front().stamp > t_min) {
    throw TimeGap("merge_and_compensate: point timestamps precede the IMU/state span");
  }
  PoseTrack track;
  integrate_imu(start, imu, t_end, gravity, &track);
  return compensate(frames, track, t_end, ext);
}

}  // namespace trunklio
