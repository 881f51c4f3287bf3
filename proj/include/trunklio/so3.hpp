#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "trunklio/common.hpp"

namespace trunklio::so3 {

inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

// Rodrigues; Taylor expansion near zero.
inline Mat3 exp(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 k = hat(phi);
  if (theta2 < 1e-16) return Mat3::Identity() + k + 0.5 * k * k;
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / theta2) * k * k;
}

inline Vec3 log(const Mat3& r) {
  const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta < 1e-8) return 0.5 * vee(r - r.transpose());
  if (M_PI - theta < 1e-6) {
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    const Mat3 b = 0.5 * (r + Mat3::Identity());
    int k = 0;
    b.diagonal().maxCoeff(&k);
    Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
    axis.normalize();
    // Fix the sign against the (small) antisymmetric part when available.
    const Vec3 w = vee(r - r.transpose());
    if (w.dot(axis) < 0.0) axis = -axis;
    return theta * axis;
  }
  return (theta / (2.0 * std::sin(theta))) * vee(r - r.transpose());
}

/// Inverse of the right Jacobian of SO(3).
inline Mat3 right_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = hat(phi);
  if (theta < 1e-8) return Mat3::Identity() + 0.5 * k;
  const double coef = 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * k + coef * k * k;
}

/// Nearest rotation in Frobenius norm.
inline Mat3 project(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Geodesic interpolation, a at s = 0 and b at s = 1.
inline Mat3 interpolate(const Mat3& a, const Mat3& b, double s) {
  return a * exp(s * log(a.transpose() * b));
}

inline double angle_between(const Mat3& a, const Mat3& b) { return log(a.transpose() * b).norm(); }

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).norm() <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace trunklio::so3
