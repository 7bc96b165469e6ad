// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include "bzx/sim.hpp"
#include "checks.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using checks::Verdict;

namespace {

const fs::path kSource = BZX_SOURCE_DIR;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> pairing_errors(const bzx::RunResult& r) {
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < r.events.size(); ++i) {
    if (r.events[i].kind != "deadline_violation") continue;
    const bool paired = i + 1 < r.events.size() && r.events[i + 1].kind == "safe_execution" &&
                        (i + 2 >= r.events.size() || r.events[i + 2].kind != "safe_execution");
    if (!paired) errors.push_back("unpaired deadline violation at t=" + std::to_string(r.events[i].t_sim));
  }
  return errors;
}

bool same_run(const bzx::RunResult& a, const bzx::RunResult& b) {
  if (a.rows != b.rows || a.events != b.events || a.executed.size() != b.executed.size()) return false;
  for (std::size_t i = 0; i < a.executed.size(); ++i) {
    const auto& x = a.executed[i].segment;
    const auto& y = b.executed[i].segment;
    if (x.duration != y.duration || x.pos.control_points() != y.pos.control_points() ||
        x.yaw.control_points() != y.yaw.control_points())
      return false;
  }
  return a.final_volume == b.final_volume && a.total_distance == b.total_distance &&
         a.final_map.states() == b.final_map.states();
}

struct Canyon {
  bzx::ExplorationConfig config;
  bzx::Scene scene;
  double observable = 0.0;
  bzx::BenchResult bench;
  double seconds = 0.0;
};

Canyon run_canyon() {
  const auto t0 = std::chrono::steady_clock::now();
  Canyon c;
  c.config = bzx::load_config(kSource / "config" / "canyon.yaml");
  c.scene = bzx::load_scene(kSource / "scenes" / "canyon.yaml");
  c.observable = bzx::observable_volume(c.scene, c.config.camera, c.config.map_res, 0.5);
  std::vector<std::uint64_t> seeds(10);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i + 1;
  c.bench = bzx::bench(c.config, c.scene, seeds, 5.0);
  c.seconds = seconds_since(t0);
  return c;
}

Verdict exploration(const Canyon& c) {
  std::ostringstream s;
  bool pass = true;
  double worst_fraction = 1.0, min_clear = INFINITY, t_min = INFINITY, t_max = 0.0, t_sum = 0.0;
  std::size_t chain_errors = 0, monotone_errors = 0;
  for (const auto& r : c.bench.runs) {
    worst_fraction = std::min(worst_fraction, r.final_volume / c.observable);
    for (std::size_t i = 1; i < r.rows.size(); ++i)
      monotone_errors += r.rows[i].explored < r.rows[i - 1].explored ? 1 : 0;
    chain_errors += bzx::check_executed_chain(r.executed, c.config.planner).size();
    min_clear = std::min(min_clear, r.min_clearance);
    t_min = std::min(t_min, r.completion_time);
    t_max = std::max(t_max, r.completion_time);
    t_sum += r.completion_time;
  }
  const double t_mean = t_sum / static_cast<double>(c.bench.runs.size());

  // One run through the on-disk replay path as well.
  const fs::path dir = fs::temp_directory_path() / "bzx_acceptance_run";
  fs::remove_all(dir);
  bzx::write_run(c.bench.runs.front(), c.config, dir);
  const auto replay = bzx::replay_run(dir, c.config.planner);
  fs::remove_all(dir);

  const bool a = worst_fraction >= 0.95;
  const bool b = monotone_errors == 0;
  const bool cc = chain_errors == 0 && replay.violations.empty() && min_clear > 0.0;
  const bool e = t_min >= 200.0 && t_max <= 800.0;
  const bool f = c.seconds < 900.0;
  pass = a && b && cc && e && f;
  s << "(a) worst " << 100.0 * worst_fraction << "% of " << c.observable << " m^3 " << (a ? "ok" : "FAIL")
    << "; (b) " << monotone_errors << " decreases " << (b ? "ok" : "FAIL") << "; (c,d) " << chain_errors
    << " chain errors, " << replay.violations.size() << " replay violations, scene clearance >= " << min_clear << " m "
    << (cc ? "ok" : "FAIL") << "; (e) completion " << t_min << "-" << t_max << " s, mean " << t_mean << " s "
    << (e ? "ok" : "FAIL") << "; (f) " << c.seconds << " s " << (f ? "ok" : "FAIL");
  return {pass, s.str()};
}

Verdict determinism(const Canyon& c) {
  auto cfg = c.config;
  cfg.seed = c.bench.seeds.front();
  const auto again = bzx::run_exploration(cfg, c.scene);
  const bool identical = same_run(again, c.bench.runs.front());
  const double mean = c.bench.mean.back(), sd = c.bench.stddev.back();
  const fs::path csv = fs::temp_directory_path() / "bzx_acceptance_bench.csv";
  bzx::write_bench_csv(c.bench, csv);
  const bool written = fs::file_size(csv) > 0 && c.bench.grid.size() > 1;
  fs::remove(csv);
  std::ostringstream s;
  s << "rerun of seed " << cfg.seed << (identical ? " identical" : " DIFFERS") << "; final volume " << mean << " +- " << sd
    << " m^3 over " << c.bench.runs.size() << " seeds on " << c.bench.grid.size() << " grid points";
  return {identical && written && sd < 0.1 * mean, s.str()};
}

Verdict failure_paths(const Canyon& c) {
  // Start inside a closed 1.6 m cell: nothing can be sampled within the sampling radius.
  bzx::Scene box = bzx::parse_scene(R"(
version: 1
bounds: {min: [-4, -4, 0], max: [4, 4, 3]}
obstacles:
  - {min: [-1.0, -1.0, 0.0], max: [1.0, 1.0, 0.6]}
  - {min: [-1.0, -1.0, 2.4], max: [1.0, 1.0, 3.0]}
  - {min: [-1.0, -1.0, 0.6], max: [-0.8, 1.0, 2.4]}
  - {min: [0.8, -1.0, 0.6], max: [1.0, 1.0, 2.4]}
  - {min: [-0.8, -1.0, 0.6], max: [0.8, -0.8, 2.4]}
  - {min: [-0.8, 0.8, 0.6], max: [0.8, 1.0, 2.4]}
)");
  auto cfg = c.config;
  cfg.max_sim_time = 120.0;
  const auto boxed = bzx::run_exploration(cfg, box);
  const auto chain = bzx::check_executed_chain(boxed.executed, cfg.planner);
  const bool boxed_ok = boxed.safe_executions > 0 && chain.empty() && pairing_errors(boxed).empty();

  // Threaded planning with almost no time per segment forces deadline violations.
  auto rushed = c.config;
  rushed.mode = bzx::RunMode::Threaded;
  rushed.threaded_time_scale = 1e-4;
  rushed.max_sim_time = 150.0;
  const auto r = bzx::run_exploration(rushed, c.scene);
  const bool rushed_ok = bzx::check_executed_chain(r.executed, rushed.planner).empty();

  std::size_t unpaired = pairing_errors(r).size(), violations = r.deadline_violations;
  for (const auto& run : c.bench.runs) {
    unpaired += pairing_errors(run).size();
    violations += run.deadline_violations;
  }
  std::ostringstream s;
  s << "boxed start: " << boxed.safe_executions << " safe executions, " << boxed.planning_failures
    << " planning failures, " << chain.size() << " chain errors, ended '" << boxed.termination << "'; "
    << violations << " deadline violations across runs, " << unpaired << " unpaired";
  return {boxed_ok && rushed_ok && unpaired == 0, s.str()};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("%s %2d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "bezier core", [] { return checks::bezier_core(); });
  report(2, "envelope containment", [] { return checks::envelope_containment(); });
  report(3, "envelope soundness", [] { return checks::envelope_soundness(); });
  report(4, "closed-form costs", [] { return checks::closed_form_costs(); });
  report(5, "effort-optimal segments", [] { return checks::qp_optimality(); });
  report(6, "gain regression", [] { return checks::gp_checks(); });
  report(7, "gain evaluator", [] { return checks::gain_checks(); });

  std::optional<Canyon> canyon;
  try {
    canyon = run_canyon();
  } catch (const std::exception& e) {
    std::printf("canyon runs failed: %s\n", e.what());
  }
  auto with_canyon = [&](Verdict (*f)(const Canyon&)) {
    return [&, f] { return canyon ? f(*canyon) : Verdict{false, "canyon runs unavailable"}; };
  };
  report(8, "canyon exploration", with_canyon(exploration));
  report(9, "determinism and bench", with_canyon(determinism));
  report(10, "failure paths", with_canyon(failure_paths));
  return failures;
}
