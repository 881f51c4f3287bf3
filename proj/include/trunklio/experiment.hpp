#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "trunklio/config.hpp"
#include "trunklio/eval.hpp"
#include "trunklio/odometry.hpp"
#include "trunklio/sim.hpp"

namespace trunklio {

namespace fs = std::filesystem;

// Output layout under the experiment directory:
//   config.json                    effective configuration
//   dataset/                       scene.json, imu.csv, frames/, truth.csv
//   runs/<mode>/                   trajectory.csv, diagnostics.csv, map.csv
//   sweep/depth-<d>/               same, for the depth sweep
//   report.csv, report.txt         per-mode metrics
//   sweep_report.csv, sweep_report.txt, sweep_fit.csv
struct RunOutput {
  std::string label;
  std::vector<PoseSample> trajectory;
  std::vector<ScanDiagnostics> diagnostics;
  CylinderMap map;
};

inline void write_trajectory(const fs::path& path, std::span<const PoseSample> traj) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << std::setprecision(17);
  sim::write_pose_csv(os, traj);
}

inline std::vector<PoseSample> read_trajectory(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return sim::read_pose_csv(is);
}

inline void write_run(const fs::path& dir, const RunOutput& r) {
  fs::create_directories(dir);
  write_trajectory(dir / "trajectory.csv", r.trajectory);
  std::ofstream diag(dir / "diagnostics.csv");
  diag << std::setprecision(17);
  write_diagnostics_header(diag);
  for (const auto& d : r.diagnostics) write_diagnostics(diag, d);
  std::ofstream map(dir / "map.csv");
  map << std::setprecision(17);
  r.map.write_csv(map);
}

/// Loads the dataset from `dir` when present, otherwise generates it (and
/// writes it when `write` is set).
inline sim::Dataset obtain_dataset(const ExperimentConfig& cfg, const fs::path& dir, bool write) {
  if (fs::exists(dir / "scene.json")) return sim::read_dataset(dir);
  sim::Dataset ds = sim::generate_dataset(cfg.sim, cfg.seed);
  if (write) sim::write_dataset(dir, ds);
  return ds;
}

inline RunOutput run_mode(const sim::Dataset& ds, const ExperimentConfig& cfg, Mode mode,
                          std::optional<int> d_max = std::nullopt) {
  OdometryConfig oc = cfg.odometry;
  oc.ext = ds.ext;
  oc.fusion.filter.mode = mode;
  if (d_max) oc.map.piecewise.d_max = *d_max;
  OdometryResult r = run_odometry(ds.frames, ds.imu, ds.initial, oc);
  RunOutput out{d_max ? "depth-" + std::to_string(*d_max) : std::string(to_string(mode)), std::move(r.trajectory),
                std::move(r.diagnostics), std::move(r.map)};
  return out;
}

/// Mean |surface residual| of every mapped point against its leaf cylinder.
inline double mean_leaf_residual(const CylinderMap& map, std::size_t* count = nullptr) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : map.trees()) {
    if (t.model.empty()) continue;
    for (const auto& p : t.points) {
      sum += std::abs(cylinder_surface_residual(p, find_cylinder_in_tree(p, t.model)));
      ++n;
    }
  }
  if (count) *count = n;
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline void write_report_files(const fs::path& csv, const fs::path& txt, std::span<const eval::MetricReport> reports,
                               std::span<const double> distances) {
  {
    std::ofstream os(csv);
    if (!os) throw Error("cannot write " + csv.string());
    eval::write_reports(os, reports);
  }
  std::ofstream os(txt);
  eval::write_table(os, reports, distances);
}

struct Stages {
  bool gen = true;
  bool run = true;
  bool eval = true;
  bool sweep = true;
};

struct ExperimentResult {
  std::vector<eval::MetricReport> modes;
  std::vector<eval::MetricReport> depths;
  std::vector<double> depth_fit_residuals;
};

/// Runs the requested stages, writing artifacts under `out_dir`. `only_mode`
/// restricts the mode runs to one mode.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir, const Stages& stages,
                                       std::optional<Mode> only_mode = std::nullopt, std::ostream* log = nullptr) {
  fs::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "config.json");
    os << to_json(cfg).dump(2) << '\n';
  }
  const fs::path data_dir = out_dir / "dataset";
  ExperimentResult res;

  std::optional<sim::Dataset> ds;
  auto dataset = [&]() -> const sim::Dataset& {
    if (!ds) ds = obtain_dataset(cfg, data_dir, stages.gen);
    return *ds;
  };
  if (stages.gen) {
    dataset();
    if (log) *log << "dataset: " << ds->frames.size() << " frames, " << ds->imu.size() << " imu samples\n";
  }

  std::vector<Mode> modes = cfg.eval.modes;
  if (only_mode) modes = {*only_mode};

  if (stages.run) {
    for (Mode m : modes) {
      const RunOutput r = run_mode(dataset(), cfg, m);
      write_run(out_dir / "runs" / std::string(to_string(m)), r);
      if (log) *log << "run " << r.label << ": " << r.diagnostics.size() << " scans\n";
    }
  }

  if (stages.eval) {
    // Truth from disk when written, so eval alone reproduces these numbers.
    std::vector<PoseSample> truth;
    if (std::ifstream is(data_dir / "truth.csv"); is) {
      truth = sim::read_pose_csv(is);
    } else if (ds) {
      truth = ds->truth;
    } else {
      throw Error("no dataset under " + data_dir.string() + "; run gen first");
    }
    for (Mode m : modes) {
      const fs::path p = out_dir / "runs" / std::string(to_string(m)) / "trajectory.csv";
      if (!fs::exists(p)) throw Error("missing " + p.string() + "; run the pipeline first");
      const auto est = read_trajectory(p);
      res.modes.push_back(eval::evaluate(std::string(to_string(m)), est, truth, cfg.eval.distances));
    }
    write_report_files(out_dir / "report.csv", out_dir / "report.txt", res.modes, cfg.eval.distances);
    if (log) eval::write_table(*log, res.modes, cfg.eval.distances);
  }

  if (stages.sweep && cfg.eval.depth_sweep) {
    const auto& d = dataset();
    std::vector<PoseSample> truth = d.truth;
    if (std::ifstream is(data_dir / "truth.csv"); is) truth = sim::read_pose_csv(is);
    std::ofstream fit(out_dir / "sweep_fit.csv");
    fit << std::setprecision(17) << "d_max,mean_abs_residual_m,points\n";
    for (int depth : cfg.eval.depths) {
      const RunOutput r = run_mode(d, cfg, cfg.eval.sweep_mode, depth);
      write_run(out_dir / "sweep" / r.label, r);
      res.depths.push_back(
          eval::evaluate(r.label, read_trajectory(out_dir / "sweep" / r.label / "trajectory.csv"), truth, cfg.eval.distances));
      std::size_t n = 0;
      const double mr = mean_leaf_residual(r.map, &n);
      res.depth_fit_residuals.push_back(mr);
      fit << depth << ',' << mr << ',' << n << '\n';
    }
    write_report_files(out_dir / "sweep_report.csv", out_dir / "sweep_report.txt", res.depths, cfg.eval.distances);
    if (log) eval::write_table(*log, res.depths, cfg.eval.distances);
  }
  return res;
}

}  // namespace trunklio
