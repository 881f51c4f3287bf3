// Command-line harness: dataset generation, pipeline runs, metrics and the
// depth sweep.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "trunklio/config.hpp"
#include "trunklio/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string preset = "forest_curve";
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string out_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)");
  cmd->add_option("--preset", o.preset, "bundled scenario used when --config is absent")
      ->check(CLI::IsMember({"forest_curve", "tree_rich", "pole_free"}));
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--out-dir", o.out_dir, "artifact directory (default out/<name>-seed<seed>)");
  cmd->add_flag("--quiet,-q", o.quiet, "no progress output");
}

trunklio::ExperimentConfig resolve(const Options& o) {
  trunklio::ExperimentConfig cfg = o.config.empty() ? trunklio::preset_config(o.preset) : trunklio::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

std::filesystem::path out_dir(const Options& o, const trunklio::ExperimentConfig& cfg) {
  if (!o.out_dir.empty()) return o.out_dir;
  return std::filesystem::path("out") / (cfg.name + "-seed" + std::to_string(cfg.seed));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trunklio experiment harness"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "generate the synthetic dataset");
  auto* run = app.add_subcommand("run", "run the pipeline on the dataset");
  auto* ev = app.add_subcommand("eval", "compute ATE/ARE/RTE/RRE for finished runs");
  auto* sweep = app.add_subcommand("sweep", "depth sweep over d_max");
  auto* all = app.add_subcommand("all", "gen, run, eval and sweep");
  auto* show = app.add_subcommand("config", "print the effective config as JSON");
  for (auto* c : {gen, run, ev, sweep, all, show}) add_common(c, o);
  for (auto* c : {run, ev}) {
    c->add_option("--mode", o.mode, "restrict to one mode")->check(CLI::IsMember({"ori-lio", "se-lio-ru", "se-lio"}));
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const trunklio::ExperimentConfig cfg = resolve(o);
    if (show->parsed()) {
      std::cout << trunklio::to_json(cfg).dump(2) << '\n';
      return 0;
    }
    trunklio::Stages st{false, false, false, false};
    if (gen->parsed()) st.gen = true;
    if (run->parsed()) st.run = true;
    if (ev->parsed()) st.eval = true;
    if (sweep->parsed()) st.sweep = true;
    if (all->parsed()) st = {true, true, true, true};
    std::optional<trunklio::Mode> only;
    if (!o.mode.empty()) only = trunklio::mode_from_string(o.mode);
    if (st.sweep && !cfg.eval.depth_sweep && !all->parsed()) {
      throw trunklio::ConfigError("depth sweep disabled in this config (eval.depth_sweep = false)");
    }
    const auto dir = out_dir(o, cfg);
    trunklio::run_experiment(cfg, dir, st, only, o.quiet ? nullptr : &std::cerr);
    if (!o.quiet) std::cerr << "artifacts in " << dir.string() << '\n';
  } catch (const trunklio::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
