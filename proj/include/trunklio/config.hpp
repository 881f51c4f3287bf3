#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trunklio/fusion.hpp"
#include "trunklio/odometry.hpp"
#include "trunklio/sim.hpp"

namespace trunklio {

struct EvalConfig {
  std::vector<double> distances{25.0, 100.0};
  double max_dt = 0.01;
  std::vector<Mode> modes{Mode::OriLio, Mode::SeLioRu, Mode::SeLio};
  bool depth_sweep = true;
  std::vector<int> depths{1, 2, 3, 4};
  Mode sweep_mode = Mode::SeLio;
};

struct ExperimentConfig {
  std::string name = "forest_curve";
  std::uint64_t seed = 42;
  sim::DatasetParams sim;
  OdometryConfig odometry;
  EvalConfig eval;
  // LiDAR-to-body extrinsics as written in the file; sync_extrinsics() copies
  // them into sim.ext and odometry.ext.
  Vec3 ext_rpy_deg = Vec3(0.0, 5.0, 0.0);
  Vec3 ext_trans = Vec3(-0.2, 0.0, -0.4);

  ExperimentConfig() { sync_extrinsics(); }
  void sync_extrinsics();
};

namespace config_detail {

using nlohmann::json;

inline Mat3 rpy_deg_to_mat(const Vec3& rpy) {
  const double k = std::numbers::pi / 180.0;
  return (Eigen::AngleAxisd(rpy.z() * k, Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y() * k, Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x() * k, Vec3::UnitX()))
      .toRotationMatrix();
}

inline json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

// Line of the JSON key `path` ("a.b.c") in `text`, found by scanning for each
// quoted key in turn. 0 when not found.
inline int line_of(const std::string& text, const std::string& path) {
  std::size_t pos = 0;
  std::stringstream ss(path);
  std::string key;
  while (std::getline(ss, key, '.')) {
    const std::size_t at = text.find('"' + key + '"', pos);
    if (at == std::string::npos) return 0;
    pos = at + 1;
  }
  if (pos == 0) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

// Reads an object section, remembering which keys were consumed so unknown
// keys can be reported.
class Section {
 public:
  Section(const json& j, std::string path, const std::string& text) : j_(j), path_(std::move(path)), text_(text) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    const int line = line_of(text_, where);
    std::string msg = "config";
    if (line > 0) msg += " line " + std::to_string(line);
    msg += ": " + where + ": " + what;
    throw ConfigError(msg);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(key_path(key), std::string("wrong type (") + e.what() + ")");
    }
  }

  void get_vec(const std::string& key, Vec3& dst) {
    std::vector<double> v{dst.x(), dst.y(), dst.z()};
    get(key, v);
    if (v.size() != 3) fail(key_path(key), "expected 3 numbers");
    dst = Vec3(v[0], v[1], v[2]);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, key_path(key), text_);
  }

  void positive(const std::string& key, double v) const {
    if (!(v > 0.0) || !std::isfinite(v)) fail(key_path(key), "must be positive");
  }
  void non_negative(const std::string& key, double v) const {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(key_path(key), "must be non-negative");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(key_path(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  const std::string& text_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline void ExperimentConfig::sync_extrinsics() {
  sim.ext.rot = config_detail::rpy_deg_to_mat(ext_rpy_deg);
  sim.ext.trans = ext_trans;
  odometry.ext = sim.ext;
}

/// Complete JSON form with every parameter spelled out.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  using config_detail::vec;
  const auto& s = c.sim;
  const auto& o = c.odometry;
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["sim"] = {
      {"duration", s.duration},
      {"truth_rate_hz", s.truth_rate_hz},
      {"scene",
       {{"corridor_length", s.scene.corridor_length},
        {"corridor_start", s.scene.corridor_start},
        {"road_half_width", s.scene.road_half_width},
        {"strip_width", s.scene.strip_width},
        {"num_trunks", s.scene.num_trunks},
        {"min_trunk_spacing", s.scene.min_trunk_spacing},
        {"radius_min", s.scene.radius_min},
        {"radius_max", s.scene.radius_max},
        {"height_min", s.scene.height_min},
        {"height_max", s.scene.height_max},
        {"curved_fraction", s.scene.curved_fraction},
        {"arc_factor_min", s.scene.arc_factor_min},
        {"arc_factor_max", s.scene.arc_factor_max},
        {"buildings", s.scene.buildings},
        {"building_offset", s.scene.building_offset},
        {"building_height", s.scene.building_height},
        {"building_segment", s.scene.building_segment},
        {"building_gap", s.scene.building_gap},
        {"building_depth", s.scene.building_depth},
        {"leaf_fraction", s.scene.leaf_fraction},
        {"leaf_radius_min", s.scene.leaf_radius_min},
        {"leaf_radius_max", s.scene.leaf_radius_max},
        {"leaf_density", s.scene.leaf_density},
        {"num_dynamic", s.scene.num_dynamic},
        {"dynamic_speed", s.scene.dynamic_speed},
        {"dynamic_travel", s.scene.dynamic_travel}}},
      {"trajectory",
       {{"profile", std::string(sim::to_string(s.trajectory.profile))},
        {"speed", s.trajectory.speed},
        {"radius", s.trajectory.radius},
        {"amplitude", s.trajectory.amplitude},
        {"wavelength", s.trajectory.wavelength},
        {"height", s.trajectory.height},
        {"origin", vec(s.trajectory.origin)}}},
      {"scan",
       {{"points_per_frame", s.scan.points_per_frame},
        {"frame_period", s.scan.frame_period},
        {"fov_half_deg", s.scan.fov_half_deg},
        {"petals_per_frame", s.scan.petals_per_frame},
        {"rotations_per_frame", s.scan.rotations_per_frame},
        {"min_range", s.scan.min_range},
        {"max_range", s.scan.max_range},
        {"range_sigma", s.scan.range_sigma}}},
      {"imu",
       {{"rate_hz", s.imu.rate_hz},
        {"gyro_white", s.imu.gyro_white},
        {"accel_white", s.imu.accel_white},
        {"gyro_bias_sigma", s.imu.gyro_bias_sigma},
        {"accel_bias_sigma", s.imu.accel_bias_sigma},
        {"corr_time_gyr", s.imu.corr_time_gyr},
        {"corr_time_acc", s.imu.corr_time_acc}}},
      {"extrinsics", {{"rpy_deg", vec(c.ext_rpy_deg)}, {"trans", vec(c.ext_trans)}}}};
  j["ins"] = {{"corr_time_acc", o.noise.corr_time_acc},
              {"corr_time_gyr", o.noise.corr_time_gyr},
              {"sigma_bias_acc", o.noise.sigma_bias_acc},
              {"sigma_bias_gyr", o.noise.sigma_bias_gyr},
              {"sigma_att", o.noise.sigma_att},
              {"sigma_vel", o.noise.sigma_vel},
              {"gravity", vec(o.noise.gravity)},
              {"merge_frames", o.merge_frames},
              {"initial_sigma",
               {{"att", o.init.att}, {"pos", o.init.pos}, {"vel", o.init.vel}, {"ba", o.init.ba}, {"bg", o.init.bg}}}};
  const auto& m = o.map;
  j["map"] = {{"dbscan_eps", m.cluster.dbscan_eps},
              {"dbscan_min_pts", m.cluster.dbscan_min_pts},
              {"min_cluster_size", m.cluster.min_cluster_size},
              {"merge_radius", m.cluster.merge_radius},
              {"match_radius", m.match_radius},
              {"buffer_capacity", m.buffer_capacity},
              {"init_frames", m.init_frames},
              {"refit_fraction", m.refit_fraction},
              {"refit_points", m.refit_points},
              {"eps_max", m.piecewise.eps_max},
              {"d_max", m.piecewise.d_max},
              {"ransac",
               {{"inlier_tol", m.piecewise.ransac.inlier_tol},
                {"max_iters", m.piecewise.ransac.max_iters},
                {"min_inlier_frac", m.piecewise.ransac.min_inlier_frac},
                {"seed", m.piecewise.ransac.seed},
                {"confidence", m.piecewise.ransac.confidence}}}};
  const auto& f = o.fusion;
  j["fusion"] = {{"max_iterations", f.filter.max_iterations},
                 {"convergence_tol", f.filter.convergence_tol},
                 {"sigma_plane", f.filter.sigma_plane},
                 {"assoc_threshold", f.assoc_threshold},
                 {"gate_factor", f.gate_factor},
                 {"sigma_c_floor_sq", f.sigma_c_floor_sq},
                 {"scan_voxel", f.scan_voxel},
                 {"plane_map",
                  {{"voxel", f.plane_map.voxel},
                   {"neighbors", f.plane_map.neighbors},
                   {"max_plane_rms", f.plane_map.max_plane_rms},
                   {"max_neighbor_dist", f.plane_map.max_neighbor_dist},
                   {"residual_gate", f.plane_map.residual_gate}}}};
  json modes = json::array();
  for (Mode md : c.eval.modes) modes.push_back(std::string(to_string(md)));
  j["eval"] = {{"distances", c.eval.distances},
               {"max_dt", c.eval.max_dt},
               {"modes", modes},
               {"depth_sweep", c.eval.depth_sweep},
               {"depths", c.eval.depths},
               {"sweep_mode", std::string(to_string(c.eval.sweep_mode))}};
  return j;
}

/// Parses and validates a config. Missing keys keep their defaults; unknown
/// keys and invalid values are errors that name the offending line.
inline ExperimentConfig parse_config(const std::string& text) {
  using config_detail::Section;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ConfigError("config line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
  }
  ExperimentConfig c;
  Section root(j, "", text);
  root.get("name", c.name);
  root.get("seed", c.seed);

  {
    auto s = root.sub("sim");
    auto& d = c.sim;
    s.get("duration", d.duration);
    s.positive("duration", d.duration);
    s.get("truth_rate_hz", d.truth_rate_hz);
    s.positive("truth_rate_hz", d.truth_rate_hz);
    {
      auto sc = s.sub("scene");
      auto& p = d.scene;
      sc.get("corridor_length", p.corridor_length);
      sc.positive("corridor_length", p.corridor_length);
      sc.get("corridor_start", p.corridor_start);
      sc.get("road_half_width", p.road_half_width);
      sc.non_negative("road_half_width", p.road_half_width);
      sc.get("strip_width", p.strip_width);
      sc.positive("strip_width", p.strip_width);
      sc.get("num_trunks", p.num_trunks);
      if (p.num_trunks < 0) sc.fail(sc.key_path("num_trunks"), "must be non-negative");
      sc.get("min_trunk_spacing", p.min_trunk_spacing);
      if (p.min_trunk_spacing < 2.0) sc.fail(sc.key_path("min_trunk_spacing"), "must be at least 2 m");
      sc.get("radius_min", p.radius_min);
      sc.get("radius_max", p.radius_max);
      if (!(p.radius_min >= 0.05 && p.radius_max <= 0.5 && p.radius_min <= p.radius_max)) {
        sc.fail(sc.key_path("radius_min"), "trunk radii must satisfy 0.05 <= radius_min <= radius_max <= 0.5");
      }
      sc.get("height_min", p.height_min);
      sc.get("height_max", p.height_max);
      if (!(p.height_min >= 1.0 && p.height_max <= 10.0 && p.height_min <= p.height_max)) {
        sc.fail(sc.key_path("height_min"), "trunk heights must satisfy 1 <= height_min <= height_max <= 10");
      }
      sc.get("curved_fraction", p.curved_fraction);
      if (!(p.curved_fraction >= 0.0 && p.curved_fraction <= 1.0)) {
        sc.fail(sc.key_path("curved_fraction"), "must lie in [0, 1]");
      }
      sc.get("arc_factor_min", p.arc_factor_min);
      sc.get("arc_factor_max", p.arc_factor_max);
      if (!(p.arc_factor_min >= 2.0 && p.arc_factor_min <= p.arc_factor_max)) {
        sc.fail(sc.key_path("arc_factor_min"), "arc radius factors must satisfy 2 <= min <= max");
      }
      sc.get("buildings", p.buildings);
      sc.get("building_offset", p.building_offset);
      sc.get("building_height", p.building_height);
      sc.positive("building_height", p.building_height);
      sc.get("building_segment", p.building_segment);
      sc.positive("building_segment", p.building_segment);
      sc.get("building_gap", p.building_gap);
      sc.non_negative("building_gap", p.building_gap);
      sc.get("building_depth", p.building_depth);
      sc.positive("building_depth", p.building_depth);
      sc.get("leaf_fraction", p.leaf_fraction);
      if (!(p.leaf_fraction >= 0.0 && p.leaf_fraction <= 1.0)) sc.fail(sc.key_path("leaf_fraction"), "must lie in [0, 1]");
      sc.get("leaf_radius_min", p.leaf_radius_min);
      sc.positive("leaf_radius_min", p.leaf_radius_min);
      sc.get("leaf_radius_max", p.leaf_radius_max);
      if (p.leaf_radius_max < p.leaf_radius_min) sc.fail(sc.key_path("leaf_radius_max"), "must be >= leaf_radius_min");
      sc.get("leaf_density", p.leaf_density);
      sc.positive("leaf_density", p.leaf_density);
      sc.get("num_dynamic", p.num_dynamic);
      if (p.num_dynamic < 0) sc.fail(sc.key_path("num_dynamic"), "must be non-negative");
      sc.get("dynamic_speed", p.dynamic_speed);
      sc.non_negative("dynamic_speed", p.dynamic_speed);
      sc.get("dynamic_travel", p.dynamic_travel);
      sc.positive("dynamic_travel", p.dynamic_travel);
      sc.finish();
    }
    {
      auto tr = s.sub("trajectory");
      auto& p = d.trajectory;
      std::string profile(sim::to_string(p.profile));
      tr.get("profile", profile);
      try {
        p.profile = sim::profile_from_string(profile);
      } catch (const ConfigError& e) {
        tr.fail(tr.key_path("profile"), e.what());
      }
      tr.get("speed", p.speed);
      tr.non_negative("speed", p.speed);
      tr.get("radius", p.radius);
      tr.positive("radius", p.radius);
      tr.get("amplitude", p.amplitude);
      tr.non_negative("amplitude", p.amplitude);
      tr.get("wavelength", p.wavelength);
      tr.positive("wavelength", p.wavelength);
      tr.get("height", p.height);
      tr.get_vec("origin", p.origin);
      tr.finish();
    }
    {
      auto sc = s.sub("scan");
      auto& p = d.scan;
      sc.get("points_per_frame", p.points_per_frame);
      if (p.points_per_frame <= 0) sc.fail(sc.key_path("points_per_frame"), "must be positive");
      sc.get("frame_period", p.frame_period);
      sc.positive("frame_period", p.frame_period);
      sc.get("fov_half_deg", p.fov_half_deg);
      if (!(p.fov_half_deg > 0.0 && p.fov_half_deg < 90.0)) sc.fail(sc.key_path("fov_half_deg"), "must lie in (0, 90)");
      sc.get("petals_per_frame", p.petals_per_frame);
      sc.positive("petals_per_frame", p.petals_per_frame);
      sc.get("rotations_per_frame", p.rotations_per_frame);
      sc.get("min_range", p.min_range);
      sc.non_negative("min_range", p.min_range);
      sc.get("max_range", p.max_range);
      if (!(p.max_range > p.min_range)) sc.fail(sc.key_path("max_range"), "must exceed min_range");
      sc.get("range_sigma", p.range_sigma);
      sc.non_negative("range_sigma", p.range_sigma);
      sc.finish();
    }
    {
      auto im = s.sub("imu");
      auto& p = d.imu;
      im.get("rate_hz", p.rate_hz);
      im.positive("rate_hz", p.rate_hz);
      for (auto [k, v] : {std::pair{"gyro_white", &p.gyro_white}, std::pair{"accel_white", &p.accel_white},
                          std::pair{"gyro_bias_sigma", &p.gyro_bias_sigma},
                          std::pair{"accel_bias_sigma", &p.accel_bias_sigma}}) {
        im.get(k, *v);
        im.non_negative(k, *v);
      }
      im.get("corr_time_gyr", p.corr_time_gyr);
      im.positive("corr_time_gyr", p.corr_time_gyr);
      im.get("corr_time_acc", p.corr_time_acc);
      im.positive("corr_time_acc", p.corr_time_acc);
      im.finish();
    }
    {
      auto ex = s.sub("extrinsics");
      ex.get_vec("rpy_deg", c.ext_rpy_deg);
      ex.get_vec("trans", c.ext_trans);
      ex.finish();
    }
    s.finish();
  }

  auto& o = c.odometry;
  {
    auto s = root.sub("ins");
    s.get("corr_time_acc", o.noise.corr_time_acc);
    s.positive("corr_time_acc", o.noise.corr_time_acc);
    s.get("corr_time_gyr", o.noise.corr_time_gyr);
    s.positive("corr_time_gyr", o.noise.corr_time_gyr);
    for (auto [k, v] : {std::pair{"sigma_bias_acc", &o.noise.sigma_bias_acc},
                        std::pair{"sigma_bias_gyr", &o.noise.sigma_bias_gyr}, std::pair{"sigma_att", &o.noise.sigma_att},
                        std::pair{"sigma_vel", &o.noise.sigma_vel}}) {
      s.get(k, *v);
      s.non_negative(k, *v);
    }
    s.get_vec("gravity", o.noise.gravity);
    s.get("merge_frames", o.merge_frames);
    if (o.merge_frames < 1) s.fail(s.key_path("merge_frames"), "must be at least 1");
    auto is = s.sub("initial_sigma");
    for (auto [k, v] : {std::pair{"att", &o.init.att}, std::pair{"pos", &o.init.pos}, std::pair{"vel", &o.init.vel},
                        std::pair{"ba", &o.init.ba}, std::pair{"bg", &o.init.bg}}) {
      is.get(k, *v);
      is.positive(k, *v);
    }
    is.finish();
    s.finish();
  }
  {
    auto s = root.sub("map");
    auto& m = o.map;
    s.get("dbscan_eps", m.cluster.dbscan_eps);
    s.positive("dbscan_eps", m.cluster.dbscan_eps);
    s.get("dbscan_min_pts", m.cluster.dbscan_min_pts);
    if (m.cluster.dbscan_min_pts < 1) s.fail(s.key_path("dbscan_min_pts"), "must be at least 1");
    s.get("min_cluster_size", m.cluster.min_cluster_size);
    s.get("merge_radius", m.cluster.merge_radius);
    s.non_negative("merge_radius", m.cluster.merge_radius);
    s.get("match_radius", m.match_radius);
    s.positive("match_radius", m.match_radius);
    s.get("buffer_capacity", m.buffer_capacity);
    if (m.buffer_capacity < 1) s.fail(s.key_path("buffer_capacity"), "must be at least 1");
    s.get("init_frames", m.init_frames);
    if (m.init_frames < 1 || m.init_frames > m.buffer_capacity) {
      s.fail(s.key_path("init_frames"), "must lie in [1, buffer_capacity]");
    }
    s.get("refit_fraction", m.refit_fraction);
    s.non_negative("refit_fraction", m.refit_fraction);
    s.get("refit_points", m.refit_points);
    s.get("eps_max", m.piecewise.eps_max);
    s.positive("eps_max", m.piecewise.eps_max);
    s.get("d_max", m.piecewise.d_max);
    if (m.piecewise.d_max < 1) s.fail(s.key_path("d_max"), "must be at least 1");
    auto r = s.sub("ransac");
    r.get("inlier_tol", m.piecewise.ransac.inlier_tol);
    r.positive("inlier_tol", m.piecewise.ransac.inlier_tol);
    r.get("max_iters", m.piecewise.ransac.max_iters);
    if (m.piecewise.ransac.max_iters < 1) r.fail(r.key_path("max_iters"), "must be at least 1");
    r.get("min_inlier_frac", m.piecewise.ransac.min_inlier_frac);
    r.get("seed", m.piecewise.ransac.seed);
    r.get("confidence", m.piecewise.ransac.confidence);
    if (!(m.piecewise.ransac.confidence > 0.0 && m.piecewise.ransac.confidence <= 1.0)) {
      r.fail(r.key_path("confidence"), "must lie in (0, 1]");
    }
    r.finish();
    s.finish();
  }
  {
    auto s = root.sub("fusion");
    auto& f = o.fusion;
    s.get("max_iterations", f.filter.max_iterations);
    if (f.filter.max_iterations < 1) s.fail(s.key_path("max_iterations"), "must be at least 1");
    s.get("convergence_tol", f.filter.convergence_tol);
    s.positive("convergence_tol", f.filter.convergence_tol);
    s.get("sigma_plane", f.filter.sigma_plane);
    s.positive("sigma_plane", f.filter.sigma_plane);
    s.get("assoc_threshold", f.assoc_threshold);
    s.positive("assoc_threshold", f.assoc_threshold);
    s.get("gate_factor", f.gate_factor);
    s.positive("gate_factor", f.gate_factor);
    s.get("sigma_c_floor_sq", f.sigma_c_floor_sq);
    s.positive("sigma_c_floor_sq", f.sigma_c_floor_sq);
    s.get("scan_voxel", f.scan_voxel);
    s.non_negative("scan_voxel", f.scan_voxel);
    auto pm = s.sub("plane_map");
    pm.get("voxel", f.plane_map.voxel);
    pm.positive("voxel", f.plane_map.voxel);
    pm.get("neighbors", f.plane_map.neighbors);
    if (f.plane_map.neighbors < 3) pm.fail(pm.key_path("neighbors"), "must be at least 3");
    pm.get("max_plane_rms", f.plane_map.max_plane_rms);
    pm.positive("max_plane_rms", f.plane_map.max_plane_rms);
    pm.get("max_neighbor_dist", f.plane_map.max_neighbor_dist);
    pm.positive("max_neighbor_dist", f.plane_map.max_neighbor_dist);
    pm.get("residual_gate", f.plane_map.residual_gate);
    pm.positive("residual_gate", f.plane_map.residual_gate);
    pm.finish();
    s.finish();
  }
  {
    auto s = root.sub("eval");
    auto& e = c.eval;
    s.get("distances", e.distances);
    for (double d : e.distances) {
      if (!(d > 0.0)) s.fail(s.key_path("distances"), "segment lengths must be positive");
    }
    s.get("max_dt", e.max_dt);
    s.positive("max_dt", e.max_dt);
    std::vector<std::string> modes;
    for (Mode m : e.modes) modes.emplace_back(to_string(m));
    s.get("modes", modes);
    e.modes.clear();
    for (const auto& m : modes) {
      try {
        e.modes.push_back(mode_from_string(m));
      } catch (const ConfigError& err) {
        s.fail(s.key_path("modes"), err.what());
      }
    }
    s.get("depth_sweep", e.depth_sweep);
    s.get("depths", e.depths);
    for (int d : e.depths) {
      if (d < 1) s.fail(s.key_path("depths"), "depths must be at least 1");
    }
    std::string sweep_mode(to_string(e.sweep_mode));
    s.get("sweep_mode", sweep_mode);
    try {
      e.sweep_mode = mode_from_string(sweep_mode);
    } catch (const ConfigError& err) {
      s.fail(s.key_path("sweep_mode"), err.what());
    }
    s.finish();
  }
  root.finish();
  c.sync_extrinsics();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// Bundled scenarios.

/// Curved-trunk forest along an S-curve; the default experiment.
inline ExperimentConfig forest_curve_config() {
  ExperimentConfig c;
  c.name = "forest_curve";
  c.seed = 42;
  auto& s = c.sim;
  s.duration = 60.0;
  s.scene.corridor_start = -20.0;
  s.scene.corridor_length = 150.0;
  s.scene.num_trunks = 100;
  s.scene.curved_fraction = 0.8;
  s.scene.arc_factor_min = 2.0;
  s.scene.arc_factor_max = 3.0;
  s.scene.leaf_fraction = 0.5;
  s.trajectory.profile = sim::Profile::SCurve;
  s.scan.points_per_frame = 2000;
  s.imu.gyro_white = 1e-3;
  s.imu.accel_white = 1e-2;
  s.imu.gyro_bias_sigma = 1e-4;
  s.imu.accel_bias_sigma = 5e-3;
  c.odometry.fusion.scan_voxel = 0.2;
  c.sync_extrinsics();
  return c;
}

/// Long tree-lined run with foliage and crossing traffic, for the ablation.
inline ExperimentConfig tree_rich_config() {
  ExperimentConfig c = forest_curve_config();
  c.name = "tree_rich";
  auto& s = c.sim;
  s.duration = 300.0;
  s.scene.corridor_length = 1.5 * s.duration + 40.0;
  s.scene.num_trunks = static_cast<int>(s.scene.corridor_length / 1.5);
  s.scene.curved_fraction = 0.3;
  s.scene.arc_factor_max = 4.0;
  s.scene.leaf_fraction = 0.7;
  s.scene.num_dynamic = static_cast<int>(s.scene.corridor_length / 25.0);
  c.eval.depth_sweep = false;
  return c;
}

/// Facades and ground only.
inline ExperimentConfig pole_free_config() {
  ExperimentConfig c = forest_curve_config();
  c.name = "pole_free";
  auto& s = c.sim;
  s.scene.num_trunks = 0;
  s.scene.leaf_fraction = 0.0;
  s.scene.buildings = true;
  s.scene.num_dynamic = 4;
  c.eval.depth_sweep = false;
  return c;
}

inline ExperimentConfig preset_config(const std::string& name) {
  if (name == "forest_curve") return forest_curve_config();
  if (name == "tree_rich") return tree_rich_config();
  if (name == "pole_free") return pole_free_config();
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace trunklio
