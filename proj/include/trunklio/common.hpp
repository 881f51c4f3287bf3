#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trunklio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Point3 = Eigen::Vector3d;

using PointList = std::vector<Point3>;

// Error taxonomy. Each failure mode named by an operation contract gets its
// own type so callers can catch precisely.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateInput : Error {
  using Error::Error;
};
struct NoConsensus : Error {
  using Error::Error;
};
struct NonMonotoneTime : Error {
  using Error::Error;
};
struct NotPSD : Error {
  using Error::Error;
};
struct TimeGap : Error {
  using Error::Error;
};
struct SingularResidual : Error {
  using Error::Error;
};
struct Diverged : Error {
  using Error::Error;
};
struct NoOverlap : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

enum class SemanticClass : std::uint8_t {
  Ground = 0,
  Building = 1,
  PoleLike = 2,
  TreeLeaves = 3,
  DynamicObject = 4,
  Unknown = 5,
};

inline std::string_view to_string(SemanticClass c) {
  switch (c) {
    case SemanticClass::Ground: return "ground";
    case SemanticClass::Building: return "building";
    case SemanticClass::PoleLike: return "pole";
    case SemanticClass::TreeLeaves: return "leaves";
    case SemanticClass::DynamicObject: return "dynamic";
    case SemanticClass::Unknown: return "unknown";
  }
  return "unknown";
}

inline SemanticClass semantic_class_from_int(int v) {
  if (v < 0 || v > 5) throw Error("invalid semantic label " + std::to_string(v));
  return static_cast<SemanticClass>(v);
}

/// One LiDAR return. `t_offset` is relative to the owning frame's start time.
struct LabeledPoint {
  Point3 p = Point3::Zero();
  double t_offset = 0.0;
  SemanticClass label = SemanticClass::Unknown;
  std::int64_t truth_id = -1;
};

struct LabeledFrame {
  double stamp = 0.0;   // frame start time, seconds
  double period = 0.1;  // acquisition span, seconds
  std::vector<LabeledPoint> points;
};

}  // namespace trunklio
