// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "trunklio/association.hpp"
#include "trunklio/config.hpp"
#include "trunklio/eval.hpp"
#include "trunklio/experiment.hpp"
#include "trunklio/fusion.hpp"
#include "trunklio/map.hpp"
#include "trunklio/piecewise.hpp"

namespace fs = std::filesystem;
using namespace trunklio;
using testing::random_rotation;
using testing::random_unit;

namespace {

constexpr double kDeg = M_PI / 180.0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdict {
  bool pass;
  std::string detail;
};

// ---- 1. Jacobians ---------------------------------------------------------

NavState random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  NavState x;
  x.rot = random_rotation(rng);
  x.pos = Vec3(n(rng), n(rng), n(rng)) * 5.0;
  x.vel = Vec3(n(rng), n(rng), n(rng));
  x.bias_acc = Vec3(n(rng), n(rng), n(rng)) * 0.1;
  x.bias_gyr = Vec3(n(rng), n(rng), n(rng)) * 0.01;
  return x;
}

Cylinder random_cylinder(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Cylinder c;
  c.axis_dir = random_unit(rng);
  c.axis_point = Point3(n(rng), n(rng), n(rng)) * 5.0;
  c.radius = 0.1 + 0.4 * std::abs(n(rng));
  c.extent_low = -2.0;
  c.extent_high = 2.0;
  return c;
}

Row15 central_difference(const NavState& x, const std::function<double(const NavState&)>& h) {
  const double step = 1e-6;
  Row15 out;
  for (int j = 0; j < kStateDim; ++j) {
    ErrorState d = ErrorState::Zero();
    d[j] = step;
    out[j] = (h(boxplus(x, d)) - h(boxplus(x, -d))) / (2.0 * step);
  }
  return out;
}

Verdict jacobians() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst_c = 0.0, worst_p = 0.0;
  bool zero_cols = true;
  const int fixtures = 1000;
  for (int i = 0; i < fixtures; ++i) {
    const NavState x = random_state(rng);
    const Cylinder c = random_cylinder(rng);
    const Point3 p = Point3(n(rng), n(rng), n(rng)) * 5.0;
    const auto rj = cylinder_residual_jacobian(x, p, c);
    const Row15 fd = central_difference(x, [&](const NavState& s) { return cylinder_residual_jacobian(s, p, c).h; });
    worst_c = std::max(worst_c, (rj.H - fd).norm() / rj.H.norm());
    zero_cols = zero_cols && rj.H.segment<9>(kVel).isZero(0.0);
  }
  for (int i = 0; i < fixtures; ++i) {
    const NavState x = random_state(rng);
    const Plane pl{random_unit(rng), 3.0 * n(rng)};
    const Point3 p = Point3(n(rng), n(rng), n(rng)) * 5.0;
    const auto rj = plane_residual_jacobian(x, p, pl);
    const Row15 fd = central_difference(x, [&](const NavState& s) { return plane_residual_jacobian(s, p, pl).h; });
    worst_p = std::max(worst_p, (rj.H - fd).norm() / rj.H.norm());
    zero_cols = zero_cols && rj.H.segment<9>(kVel).isZero(0.0);
  }
  const double secs = seconds_since(t0);
  return {worst_c <= 1e-5 && worst_p <= 1e-5 && zero_cols && secs < 10.0,
          fmt("%d+%d fixtures, max rel err cylinder %.2e plane %.2e, vel/bias columns zero: %s, %.1f s", fixtures,
              fixtures, worst_c, worst_p, zero_cols ? "yes" : "no", secs)};
}

// ---- 2. Cylinder recovery -------------------------------------------------

Verdict cylinder_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> r_dist(0.1, 0.5);
  std::uniform_real_distribution<double> pos(-20.0, 20.0);
  int clean_ok = 0, noisy_ok = 0;
  double worst_r = 0.0, worst_a = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 u = random_unit(rng);
    const Point3 q(pos(rng), pos(rng), pos(rng));
    const double r = r_dist(rng);
    const Cylinder c = fit_cylinder(testing::sample_cylinder(u, q, r, 3.0, 500, 0.0, rng));
    const double er = std::abs(c.radius - r), ea = testing::axis_angle(c.axis_dir, u);
    worst_r = std::max(worst_r, er);
    worst_a = std::max(worst_a, ea);
    clean_ok += er <= 1e-6 && ea <= 1e-5;
  }
  for (int i = 0; i < 100; ++i) {
    const Vec3 u = random_unit(rng);
    const Point3 q(pos(rng), pos(rng), pos(rng));
    const double r = r_dist(rng);
    try {
      const Cylinder c = fit_cylinder(testing::sample_cylinder(u, q, r, 3.0, 500, 0.01, rng));
      noisy_ok += std::abs(c.radius - r) <= 5e-3 && testing::axis_angle(c.axis_dir, u) <= 0.5 * kDeg;
    } catch (const Error&) {
    }
  }
  const double secs = seconds_since(t0);
  return {clean_ok == 100 && noisy_ok >= 95 && secs < 30.0,
          fmt("noise-free %d/100 (worst radius %.1e m, axis %.1e rad), sigma 0.01: %d/100 within tolerance, %.1f s",
              clean_ok, worst_r, worst_a, noisy_ok, secs)};
}

// ---- 3. Piecewise benefit -------------------------------------------------

double mean_abs_residual(const PointList& pts, const TreeModel& tree) {
  double s = 0.0;
  for (const auto& p : pts) s += std::abs(cylinder_surface_residual(p, find_cylinder_in_tree(p, tree)));
  return s / static_cast<double>(pts.size());
}

Verdict piecewise_benefit() {
  std::mt19937_64 rng(303);
  const PointList pts = testing::sample_curved_trunk(Point3(0, 0, 0), 10.0, 0.2, 4.0, 2000, 0.005, rng);
  PiecewiseParams p1, p3;
  p1.d_max = 1;
  p3.d_max = 3;
  const double r1 = mean_abs_residual(pts, build_tree(pts, p1));
  const double r3 = mean_abs_residual(pts, build_tree(pts, p3));

  const ExperimentConfig cfg = forest_curve_config();
  const sim::Dataset ds = sim::generate_dataset(cfg.sim, cfg.seed);
  const double a1 = eval::compute_ate_are(run_mode(ds, cfg, Mode::SeLio, 1).trajectory, ds.truth).ate;
  const double a3 = eval::compute_ate_are(run_mode(ds, cfg, Mode::SeLio, 3).trajectory, ds.truth).ate;
  return {r3 < r1 && a3 <= a1, fmt("fixture mean |residual| d1 %.4f m, d3 %.4f m; forest_curve ATE d1 %.4f m, d3 %.4f m",
                                   r1, r3, a1, a3)};
}

// ---- 4. Ablation ordering -------------------------------------------------

Verdict ablation() {
  const ExperimentConfig cfg = tree_rich_config();
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::map<Mode, double> sum;
  double slowest = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed : seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    const sim::Dataset ds = sim::generate_dataset(cfg.sim, seed);
    per_seed << " s" << seed << "[";
    for (Mode m : {Mode::OriLio, Mode::SeLioRu, Mode::SeLio}) {
      const double ate = eval::compute_ate_are(run_mode(ds, cfg, m).trajectory, ds.truth).ate;
      sum[m] += ate;
      per_seed << fmt("%.3f", ate) << (m == Mode::SeLio ? "]" : " ");
    }
    slowest = std::max(slowest, seconds_since(t0));
  }
  const double k = static_cast<double>(seeds.size());
  const double ori = sum[Mode::OriLio] / k, ru = sum[Mode::SeLioRu] / k, se = sum[Mode::SeLio] / k;
  const double gain = 1.0 - se / ori;
  return {se <= ru && ru <= ori && gain >= 0.20 && slowest < 120.0,
          fmt("mean ATE ori-lio %.4f, se-lio-ru %.4f, se-lio %.4f m; se-lio %.1f%% below ori-lio; slowest seed %.0f s;",
              ori, ru, se, 100.0 * gain, slowest) +
              per_seed.str()};
}

// ---- 5. Degradation guard -------------------------------------------------

Verdict degradation_guard() {
  const ExperimentConfig cfg = pole_free_config();
  const sim::Dataset ds = sim::generate_dataset(cfg.sim, cfg.seed);
  const RunOutput se = run_mode(ds, cfg, Mode::SeLio);
  const RunOutput ru = run_mode(ds, cfg, Mode::SeLioRu);
  const double a_se = eval::compute_ate_are(se.trajectory, ds.truth).ate;
  const double a_ru = eval::compute_ate_are(ru.trajectory, ds.truth).ate;
  bool identical = se.trajectory.size() == ru.trajectory.size();
  for (std::size_t i = 0; identical && i < se.trajectory.size(); ++i) {
    identical = se.trajectory[i].stamp == ru.trajectory[i].stamp && se.trajectory[i].pos == ru.trajectory[i].pos &&
                se.trajectory[i].rot == ru.trajectory[i].rot;
  }
  const double rel = std::abs(a_se - a_ru) / a_ru;
  return {rel <= 0.05 && identical && se.map.trees().empty(),
          fmt("ATE se-lio %.4f m, se-lio-ru %.4f m (%.2f%% apart); cylinder map trees %zu; bitwise identical: %s", a_se,
              a_ru, 100.0 * rel, se.map.trees().size(), identical ? "yes" : "no")};
}

// ---- 6. Motion compensation -----------------------------------------------

LabeledFrame frame_of(double stamp, const PointList& pts, const std::vector<double>& offsets) {
  LabeledFrame f;
  f.stamp = stamp;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    LabeledPoint lp;
    lp.p = pts[i];
    lp.t_offset = offsets[i];
    lp.label = SemanticClass::Ground;
    lp.truth_id = static_cast<std::int64_t>(i);
    f.points.push_back(lp);
  }
  return f;
}

Verdict motion_compensation() {
  const Vec3 g(0.0, 0.0, -kGravity);
  // Constant-speed circle: heading follows the velocity, so body rate and
  // specific force are constant.
  const double radius = 10.0, speed = 1.5, w = speed / radius;
  auto rot = [&](double t) { return so3::exp(Vec3(0, 0, w * t)); };
  auto pos = [&](double t) { return Vec3(radius * std::sin(w * t), radius * (1.0 - std::cos(w * t)), 0.0); };
  std::vector<ImuSample> imu;
  for (int k = 0; k <= 200; ++k) imu.push_back({k / 200.0, Vec3(0, 0, w), Vec3(0, speed * w, kGravity)});
  NavState start;
  start.vel = Vec3(speed, 0, 0);

  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  PointList landmarks;
  for (int i = 0; i < 100; ++i) landmarks.emplace_back(u(rng), u(rng), 0.5 * u(rng));
  std::vector<LabeledFrame> frames;
  for (int j = 0; j < 5; ++j) {
    PointList pts;
    std::vector<double> off;
    for (std::size_t i = 0; i < landmarks.size(); ++i) {
      const double o = 0.1 * static_cast<double>((i * 7 + static_cast<std::size_t>(j) * 3) % 100) / 100.0;
      const double t = j / 10.0 + o;
      pts.push_back(rot(t).transpose() * (landmarks[i] - pos(t)));
      off.push_back(o);
    }
    frames.push_back(frame_of(j / 10.0, pts, off));
  }
  const LabeledFrame merged = merge_and_compensate(frames, imu, start, g);
  // Spread: RMS distance of each observation from the mean of its landmark.
  std::vector<Vec3> mean(landmarks.size(), Vec3::Zero());
  std::vector<int> count(landmarks.size(), 0);
  for (const auto& p : merged.points) {
    mean[static_cast<std::size_t>(p.truth_id)] += p.p;
    ++count[static_cast<std::size_t>(p.truth_id)];
  }
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] /= count[i];
  double sq = 0.0;
  for (const auto& p : merged.points) sq += (p.p - mean[static_cast<std::size_t>(p.truth_id)]).squaredNorm();
  const double spread = std::sqrt(sq / static_cast<double>(merged.points.size()));

  std::vector<ImuSample> still;
  for (int k = 0; k <= 200; ++k) still.push_back({k / 200.0, Vec3::Zero(), -g});
  std::vector<LabeledFrame> sframes;
  for (int j = 0; j < 5; ++j) {
    PointList pts;
    std::vector<double> off;
    for (int i = 0; i < 200; ++i) {
      pts.push_back(random_unit(rng) * (1.0 + 30.0 * std::abs(u(rng)) / 20.0));
      off.push_back(0.1 * i / 200.0);
    }
    sframes.push_back(frame_of(j / 10.0, pts, off));
  }
  const LabeledFrame smerged = merge_and_compensate(sframes, still, NavState{}, g);
  bool exact = smerged.points.size() == 1000;
  std::size_t k = 0;
  for (const auto& f : sframes) {
    for (const auto& p : f.points) {
      if (!exact) break;
      exact = smerged.points[k].p == p.p && smerged.points[k].truth_id == p.truth_id;
      ++k;
    }
  }
  return {spread < 1e-3 && exact,
          fmt("5-frame buffer on a 10 m circle: landmark RMS spread %.2e m; static merge equals concatenation: %s",
              spread, exact ? "yes" : "no")};
}

// ---- 7. Oracle equivalence ------------------------------------------------

std::vector<MapTree> random_forest(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> xy(-50.0, 50.0);
  std::uniform_real_distribution<double> rad(0.1, 0.4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<MapTree> trees;
  for (std::size_t i = 0; i < count; ++i) {
    const Point3 base(xy(rng), xy(rng), 0.0);
    const double r = rad(rng);
    PointList pts = unit(rng) < 0.5
                        ? testing::sample_cylinder(Vec3::UnitZ(), base, r, 4.0, 600, 0.005, rng)
                        : testing::sample_curved_trunk(base, 10.0 + 10.0 * unit(rng), r, 4.0, 1200, 0.005, rng);
    MapTree t;
    t.id = static_cast<int>(i);
    t.model = build_tree(pts, {});
    t.points = std::move(pts);
    trees.push_back(std::move(t));
  }
  return trees;
}

std::size_t brute_nearest(const Point3& p, const std::vector<MapTree>& trees) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const double d = std::hypot(p.x() - trees[i].model.centroid.x(), p.y() - trees[i].model.centroid.y());
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// O(n^2) DBSCAN expanding clusters from core points in input order.
std::vector<int> reference_dbscan(const PointList& pts, double eps, int min_pts) {
  const std::size_t n = pts.size();
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((pts[i] - pts[j]).norm() <= eps) nb[i].push_back(j);
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] >= 0 || static_cast<int>(nb[i].size()) < min_pts) continue;
    const int c = next++;
    std::vector<std::size_t> stack{i};
    label[i] = c;
    while (!stack.empty()) {
      const std::size_t q = stack.back();
      stack.pop_back();
      if (static_cast<int>(nb[q].size()) < min_pts) continue;
      for (std::size_t j : nb[q]) {
        if (label[j] < 0) {
          label[j] = c;
          stack.push_back(j);
        }
      }
    }
  }
  return label;
}

// Same noise set, same core-point partition with the same numbering. Border
// points reachable from two clusters may legitimately land in either.
bool same_clustering(const PointList& pts, double eps, int min_pts) {
  const auto got = dbscan_cluster(pts, eps, min_pts);
  const auto ref = reference_dbscan(pts, eps, min_pts);
  const std::size_t n = pts.size();
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    int c = 0;
    for (std::size_t j = 0; j < n; ++j) c += (pts[i] - pts[j]).norm() <= eps;
    core[i] = c >= min_pts;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((got.labels[i] < 0) != (ref[i] < 0)) return false;
    if (core[i] && got.labels[i] != ref[i]) return false;
  }
  return true;
}

Verdict oracle_equivalence() {
  const auto trees = random_forest(60, 707);
  std::mt19937_64 rng(708);
  std::uniform_real_distribution<double> xy(-55.0, 55.0);
  std::uniform_real_distribution<double> z(-1.0, 5.0);
  const int queries = 100000;
  int coarse = 0;
  for (int i = 0; i < queries; ++i) {
    const Point3 p(xy(rng), xy(rng), z(rng));
    const auto a = associate_point(p, trees, 1e9);
    coarse += a && a->tree_index == brute_nearest(p, trees);
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  int db_ok = 0;
  for (int f = 0; f < 50; ++f) {
    PointList pts;
    const int blobs = 1 + f % 4;
    for (int b = 0; b < blobs; ++b) {
      const Point3 c(8.0 * u(rng), 8.0 * u(rng), u(rng));
      const double s = 0.1 + 0.3 * u(rng);
      const int cnt = 20 + static_cast<int>(80 * u(rng));
      for (int i = 0; i < cnt; ++i) pts.push_back(c + s * Point3(n(rng), n(rng), n(rng)));
    }
    for (int i = 0; i < 30; ++i) pts.emplace_back(8.0 * u(rng), 8.0 * u(rng), u(rng));
    db_ok += same_clustering(pts, 0.2 + 0.3 * u(rng), 3 + f % 5);
  }

  int leaf_total = 0, leaf_ok = 0;
  for (const auto& t : trees) {
    if (leaves(t.model).size() < 2) continue;
    for (const auto& q : testing::sample_on_leaves(t.model, 200, 0.002, rng)) {
      ++leaf_total;
      leaf_ok += find_leaf_index(q, t.model) == testing::exhaustive_leaf(q, t.model);
    }
  }
  const double leaf_frac = static_cast<double>(leaf_ok) / std::max(leaf_total, 1);
  return {coarse == queries && db_ok == 50 && leaf_total > 0 && leaf_frac >= 0.99,
          fmt("coarse association %d/%d; dbscan %d/50 fixtures; leaf search %d/%d (%.2f%%)", coarse, queries, db_ok,
              leaf_ok, leaf_total, 100.0 * leaf_frac)};
}

// ---- 8. Filter convergence ------------------------------------------------

struct ObsSet {
  std::vector<PlaneObservation> planes;
  std::vector<CylinderObservation> cylinders;
};

ObsSet noise_free_scene(const NavState& truth, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
  ObsSet s;
  const Plane walls[] = {{Vec3(1, 0, 0), 5.0}, {Vec3(0, 1, 0), -4.0}, {Vec3(0, 0, 1), 0.0}};
  for (const auto& w : walls) {
    const Vec3 a = testing::any_perpendicular(w.normal);
    const Vec3 b = w.normal.cross(a);
    for (int i = 0; i < 400; ++i) {
      const Point3 pw = w.offset * w.normal + u(rng) * a + u(rng) * b;
      s.planes.push_back({truth.rot.transpose() * (pw - truth.pos), w, 0.05 * 0.05});
    }
  }
  Cylinder c1, c2;
  c1.axis_point = Point3(3, 3, 0);
  c1.radius = 0.3;
  c2.axis_point = Point3(-2, 4, 0);
  c2.radius = 0.2;
  for (const Cylinder& c : {c1, c2}) {
    for (int i = 0; i < 400; ++i) {
      const double a = ang(rng);
      const Point3 pw = c.axis_point + Vec3(c.radius * std::cos(a), c.radius * std::sin(a), 2.0 + 0.5 * u(rng));
      s.cylinders.push_back({truth.rot.transpose() * (pw - truth.pos), c, 1e-4});
    }
  }
  return s;
}

Verdict filter_convergence() {
  std::mt19937_64 rng(808);
  int converged = 0, max_iters = 0;
  double worst_pos = 0.0, worst_deg = 0.0;
  const int trials = 20;
  for (int i = 0; i < trials; ++i) {
    NavState truth;
    truth.rot = random_rotation(rng, 0.5);
    truth.pos = Vec3(0.5, -0.3, 1.2);
    const ObsSet s = noise_free_scene(truth, rng);
    ErrorState off = ErrorState::Zero();
    off.segment<3>(kRot) = random_unit(rng) * kDeg;
    off.segment<3>(kPos) = Vec3(0.1, 0.1, 0.0);
    const auto r = ieskf_update(boxplus(truth, off), Cov15::Identity(), s.cylinders, s.planes, FilterConfig{});
    const double ep = (r.state.pos - truth.pos).norm();
    const double ed = so3::angle_between(r.state.rot, truth.rot) / kDeg;
    worst_pos = std::max(worst_pos, ep);
    worst_deg = std::max(worst_deg, ed);
    max_iters = std::max(max_iters, r.iterations);
    converged += !r.diverged && r.iterations <= 5 && ep < 1e-6 && ed < 1e-5;
  }

  std::normal_distribution<double> n(0.0, 1.0);
  NoiseParams np;
  NavState x;
  Cov15 p = Cov15::Identity() * 1e-2;
  double worst_eig = 0.0;
  bool symmetric = true;
  const int steps = 10000;
  for (int k = 0; k < steps; ++k) {
    const ImuSample s{0.0, Vec3(n(rng), n(rng), n(rng)) * 0.2, Vec3(n(rng), n(rng), n(rng) + kGravity)};
    p = propagate_covariance(p, x, s, 0.005, np);
    x = mechanize(x, s, 0.005, np.gravity);
    std::vector<PlaneObservation> obs;
    for (int i = 0; i < 10; ++i) {
      const Vec3 nrm = random_unit(rng);
      const Point3 pb = Point3(n(rng), n(rng), n(rng)) * 5.0;
      obs.push_back({pb, Plane{nrm, nrm.dot(x.rot * pb + x.pos) + 0.01 * n(rng)}, 0.0025});
    }
    const auto r = ieskf_update(x, p, {}, obs, FilterConfig{});
    x = r.state;
    p = r.cov;
    symmetric = symmetric && p == p.transpose();
    const Eigen::SelfAdjointEigenSolver<Cov15> es(p);
    worst_eig = std::min(worst_eig, es.eigenvalues().minCoeff() / p.trace());
  }
  return {converged == trials && symmetric && worst_eig >= -1e-12,
          fmt("%d/%d offset priors converged (max %d iterations, worst %.1e m, %.1e deg); %d propagate+update steps: "
              "symmetric %s, min eigenvalue/trace %.1e",
              converged, trials, max_iters, worst_pos, worst_deg, steps, symmetric ? "yes" : "no", worst_eig)};
}

// ---- 9. Determinism -------------------------------------------------------

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(is), {}};
  }
  return out;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "trunklio_acceptance_determinism";
  fs::remove_all(root);
  int rc = 0;
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string("\"") + TRUNKLIO_EVAL_CLI + "\" all --seed 42 --quiet --out-dir \"" +
                            (root / run).string() + "\"";
    rc |= std::system(cmd.c_str());
  }
  if (rc != 0) return {false, "eval_cli exited with an error"};
  const auto a = tree_contents(root / "a");
  const auto b = tree_contents(root / "b");
  std::size_t traj = 0, reports = 0, differ = 0;
  for (const auto& [name, bytes] : a) {
    if (name.ends_with("trajectory.csv")) ++traj;
    if (name.find("report") != std::string::npos) ++reports;
    const auto it = b.find(name);
    differ += it == b.end() || it->second != bytes;
  }
  const bool pass = a.size() == b.size() && differ == 0 && traj > 0 && reports > 0;
  if (pass) fs::remove_all(root);
  return {pass, fmt("eval_cli all --seed 42 twice: %zu files (%zu trajectories, %zu reports), %zu differ", a.size(),
                    traj, reports, differ)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"jacobians", jacobians},
      {"cylinder recovery", cylinder_recovery},
      {"piecewise benefit", piecewise_benefit},
      {"ablation ordering", ablation},
      {"degradation guard", degradation_guard},
      {"motion compensation", motion_compensation},
      {"oracle equivalence", oracle_equivalence},
      {"filter convergence", filter_convergence},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (v.pass ? "PASS" : "FAIL") << "  "
              << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
