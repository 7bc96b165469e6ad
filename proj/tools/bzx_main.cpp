// Command-line front end: run, validate, replay, bench.

#include "bzx/sim.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;

namespace {

void print_summary(const bzx::RunResult& r) {
  std::cout << std::fixed << std::setprecision(2) << "explored " << r.final_volume << " m^3 in " << r.completion_time
            << " s, distance " << r.total_distance << " m, " << r.commits << " commits, " << r.safe_executions
            << " safe executions, " << r.deadline_violations << " deadline violations (" << r.termination << ", "
            << r.wall_time << " s wall)\n";
}

bzx::ExplorationConfig load_with_overrides(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                                           const std::string& mode) {
  bzx::ExplorationConfig cfg = bzx::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (mode == "threaded") cfg.mode = bzx::RunMode::Threaded;
  if (mode == "deterministic") cfg.mode = bzx::RunMode::Deterministic;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bezier-tree exploration planner with a kinematic simulator"};
  app.require_subcommand(1);

  std::string config_path, scene_path, out_dir, mode;
  std::optional<std::uint64_t> seed;
  int n_seeds = 10;
  double grid_step = 5.0;

  auto* run = app.add_subcommand("run", "Explore a scene and write metrics, summary and dumps");
  run->add_option("--config", config_path, "Config file")->required();
  run->add_option("--scene", scene_path, "Scene file")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--mode", mode, "deterministic or threaded")->check(CLI::IsMember({"deterministic", "threaded"}));
  run->add_option("--out", out_dir, "Output directory")->required();

  auto* validate = app.add_subcommand("validate", "Check a config and optionally a scene");
  validate->add_option("--config", config_path, "Config file")->required();
  validate->add_option("--scene", scene_path, "Scene file");

  auto* replay = app.add_subcommand("replay", "Re-check invariants over a run directory");
  replay->add_option("--out", out_dir, "Run directory written by 'run'")->required();
  replay->add_option("--config", config_path, "Config file (defaults to the copy in the run directory)");

  auto* bench = app.add_subcommand("bench", "Run several seeds and aggregate explored-volume curves");
  bench->add_option("--config", config_path, "Config file")->required();
  bench->add_option("--scene", scene_path, "Scene file")->required();
  bench->add_option("--seeds", n_seeds, "Number of seeds")->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed, "First seed (default: config seed)");
  bench->add_option("--mode", mode, "deterministic or threaded")->check(CLI::IsMember({"deterministic", "threaded"}));
  bench->add_option("--grid", grid_step, "Time grid step, s")->check(CLI::PositiveNumber);
  bench->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = load_with_overrides(config_path, seed, mode);
      const auto scene = bzx::load_scene(scene_path);
      for (const auto& w : scene.warnings) std::cerr << "warning: " << w << '\n';
      fs::create_directories(fs::path(out_dir) / "trees");
      auto observer = [&](std::size_t it, const bzx::TrajectoryTree& tree) {
        std::ostringstream name;
        name << "iter_" << std::setw(5) << std::setfill('0') << it << ".json";
        std::ofstream(fs::path(out_dir) / "trees" / name.str()) << tree.to_json() << '\n';
      };
      const auto result = bzx::run_exploration(cfg, scene, std::nullopt, observer);
      bzx::write_run(result, cfg, out_dir);
      print_summary(result);
      return 0;
    }
    if (*validate) {
      const auto cfg = bzx::load_config(config_path);
      std::cout << "config ok: " << config_path << '\n';
      if (!scene_path.empty()) {
        const auto scene = bzx::load_scene(scene_path);
        for (const auto& w : scene.warnings) std::cout << "warning: " << w << '\n';
        if (!scene.bounds.contains(cfg.start) || scene.in_obstacle(cfg.start)) {
          std::cerr << "error: start pose is outside the scene or inside an obstacle\n";
          return 1;
        }
        std::cout << "scene ok: " << scene_path << " (" << scene.obstacles.size() << " obstacles)\n";
      }
      return 0;
    }
    if (*replay) {
      const fs::path dir = out_dir;
      const auto cfg = bzx::load_config(config_path.empty() ? (dir / "config.yaml").string() : config_path);
      const auto report = bzx::replay_run(dir, cfg.planner);
      for (const auto& v : report.violations) std::cout << "violation: " << v << '\n';
      std::cout << report.trees << " trees, " << report.segments << " segments, " << report.violations.size()
                << " violations\n";
      return report.violations.empty() ? 0 : 2;
    }
    if (*bench) {
      const auto cfg = load_with_overrides(config_path, std::nullopt, mode);
      const auto scene = bzx::load_scene(scene_path);
      std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_seeds));
      std::iota(seeds.begin(), seeds.end(), seed.value_or(cfg.seed));
      const auto result = bzx::bench(cfg, scene, seeds, grid_step);
      fs::create_directories(out_dir);
      bzx::write_bench_csv(result, fs::path(out_dir) / "bench.csv");
      nlohmann::json runs = nlohmann::json::array();
      for (std::size_t i = 0; i < result.runs.size(); ++i) {
        runs.push_back(bzx::run_summary(result.runs[i], cfg));
        runs.back()["seed"] = seeds[i];
        runs.back().erase("events");
        runs.back().erase("config");
      }
      std::ofstream(fs::path(out_dir) / "bench_summary.json")
          << std::setw(2)
          << nlohmann::json{{"final_volume_mean_m3", result.mean.back()},
                            {"final_volume_stddev_m3", result.stddev.back()},
                            {"runs", runs}}
          << '\n';
      for (const auto& r : result.runs) print_summary(r);
      std::cout << "final volume mean " << result.mean.back() << " m^3, stddev " << result.stddev.back() << " m^3\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
