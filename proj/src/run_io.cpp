#include "bzx/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bzx {

namespace fs = std::filesystem;

void write_metrics_csv(const RunResult& run, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  out << "t_sim_s,explored_m3,distance_m,tree_nodes,cache_size,tau_m,event\n";
  for (const auto& r : run.rows)
    out << r.t_sim << ',' << r.explored << ',' << r.distance << ',' << r.tree_nodes << ',' << r.cache_size << ','
        << r.tau << ',' << r.event << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("t_sim_s,", 0) != 0) throw std::runtime_error("not a metrics file: " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("malformed metrics row: " + line);
    MetricsRow r;
    r.t_sim = std::stod(cells[0]);
    r.explored = std::stod(cells[1]);
    r.distance = std::stod(cells[2]);
    r.tree_nodes = std::stoul(cells[3]);
    r.cache_size = std::stoul(cells[4]);
    r.tau = std::stod(cells[5]);
    r.event = cells[6];
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json run_summary(const RunResult& run, const ExplorationConfig& config) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : run.events) events.push_back({{"t_sim_s", e.t_sim}, {"kind", e.kind}});
  return {{"final_volume_m3", run.final_volume},
          {"completion_time_s", run.completion_time},
          {"total_distance_m", run.total_distance},
          {"commits", run.commits},
          {"safe_executions", run.safe_executions},
          {"deadline_violations", run.deadline_violations},
          {"planning_failures", run.planning_failures},
          {"iterations", run.iterations},
          {"termination", run.termination},
          {"min_scene_clearance_m", run.min_clearance},
          {"wall_time_s", run.wall_time},
          {"seed", config.seed},
          {"mode", config.mode == RunMode::Threaded ? "threaded" : "deterministic"},
          {"config", config.source.empty() ? format_config(config) : config.source},
          {"events", events}};
}

namespace {

std::vector<std::string> event_pairing_errors(const std::vector<std::string>& kinds) {
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] != "deadline_violation") continue;
    const bool paired = i + 1 < kinds.size() && kinds[i + 1] == "safe_execution" &&
                        (i + 2 >= kinds.size() || kinds[i + 2] != "safe_execution");
    if (!paired) errors.push_back("deadline violation " + std::to_string(i) + " not followed by exactly one safe execution");
  }
  return errors;
}

std::vector<std::string> metrics_errors(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> errors;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!(rows[i].t_sim > rows[i - 1].t_sim)) errors.push_back("time not increasing at row " + std::to_string(i));
    if (rows[i].explored < rows[i - 1].explored) errors.push_back("explored volume decreased at row " + std::to_string(i));
    if (rows[i].distance < rows[i - 1].distance) errors.push_back("distance decreased at row " + std::to_string(i));
  }
  return errors;
}

}  // namespace

void write_run(const RunResult& run, const ExplorationConfig& config, const fs::path& dir) {
  fs::create_directories(dir / "maps");
  write_metrics_csv(run, dir / "metrics.csv");
  {
    std::ofstream out(dir / "summary.json");
    out << std::setw(2) << run_summary(run, config) << '\n';
  }
  {
    std::ofstream out(dir / "config.yaml");
    out << (config.source.empty() ? format_config(config) : config.source);
  }
  dump_map(run.final_map, dir / "maps" / "final.map");

  std::map<const OccupancyGrid*, std::string> written;
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& e : run.executed) {
    nlohmann::json js = {{"kind", e.kind}, {"t_start_s", e.t_start}, {"segment", segment_to_json(e.segment)}};
    if (e.snapshot) {
      auto it = written.find(e.snapshot.get());
      if (it == written.end()) {
        std::ostringstream name;
        name << "snap_" << std::setw(4) << std::setfill('0') << written.size() << ".map";
        dump_map(*e.snapshot, dir / "maps" / name.str());
        it = written.emplace(e.snapshot.get(), "maps/" + name.str()).first;
      }
      js["snapshot"] = it->second;
    }
    segs.push_back(std::move(js));
  }
  std::ofstream out(dir / "executed.json");
  out << segs << '\n';
  std::ofstream tree(dir / "final_tree.json");
  tree << run.final_tree.to_json() << '\n';
}

ReplayReport replay_run(const fs::path& dir, const PlannerParams& params) {
  ReplayReport rep;
  auto add = [&](const std::string& where, const std::vector<std::string>& errs) {
    for (const auto& e : errs) rep.violations.push_back(where + ": " + e);
  };
  auto read_json = [](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return nlohmann::json::parse(in);
  };

  std::vector<fs::path> trees;
  if (fs::exists(dir / "trees"))
    for (const auto& e : fs::directory_iterator(dir / "trees"))
      if (e.path().extension() == ".json") trees.push_back(e.path());
  if (fs::exists(dir / "final_tree.json")) trees.push_back(dir / "final_tree.json");
  std::sort(trees.begin(), trees.end());
  for (const auto& p : trees) {
    add(p.filename().string(), check_tree_invariants(TrajectoryTree::from_json(read_json(p))));
    ++rep.trees;
  }

  std::map<std::string, std::shared_ptr<const OccupancyGrid>> maps;
  std::vector<ExecutedSegment> executed;
  for (const auto& js : read_json(dir / "executed.json")) {
    ExecutedSegment e;
    e.kind = js.at("kind").get<std::string>();
    e.t_start = js.at("t_start_s").get<double>();
    e.segment = segment_from_json(js.at("segment"));
    if (js.contains("snapshot")) {
      const auto name = js.at("snapshot").get<std::string>();
      auto& m = maps[name];
      if (!m) m = std::make_shared<const OccupancyGrid>(load_map_dump(dir / name));
      e.snapshot = m;
    }
    executed.push_back(std::move(e));
  }
  rep.segments = executed.size();
  add("executed", check_executed_chain(executed, params));
  add("metrics", metrics_errors(read_metrics_csv(dir / "metrics.csv")));

  std::vector<std::string> kinds;
  for (const auto& e : read_json(dir / "summary.json").at("events")) kinds.push_back(e.at("kind").get<std::string>());
  add("events", event_pairing_errors(kinds));
  return rep;
}

BenchResult bench(const ExplorationConfig& config, const Scene& scene, const std::vector<std::uint64_t>& seeds,
                  double grid_step) {
  if (seeds.empty()) throw std::invalid_argument("bench: no seeds");
  if (!(grid_step > 0.0)) throw std::invalid_argument("bench: grid step must be positive");
  BenchResult out;
  out.seeds = seeds;
  double t_end = 0.0;
  for (const auto seed : seeds) {
    ExplorationConfig c = config;
    c.seed = seed;
    out.runs.push_back(run_exploration(c, scene));
    t_end = std::max(t_end, out.runs.back().completion_time);
  }
  for (double t = 0.0; t <= t_end + 1e-9; t += grid_step) out.grid.push_back(t);
  if (out.grid.back() < t_end) out.grid.push_back(t_end);

  for (const auto& run : out.runs) {
    std::vector<double> curve;
    std::size_t i = 0;
    double v = 0.0;
    for (const double t : out.grid) {
      while (i < run.rows.size() && run.rows[i].t_sim <= t + 1e-9) v = run.rows[i++].explored;
      curve.push_back(v);
    }
    out.curves.push_back(std::move(curve));
  }
  const double n = static_cast<double>(out.runs.size());
  for (std::size_t k = 0; k < out.grid.size(); ++k) {
    double sum = 0.0, sq = 0.0;
    for (const auto& c : out.curves) sum += c[k];
    const double mean = sum / n;
    for (const auto& c : out.curves) sq += (c[k] - mean) * (c[k] - mean);
    out.mean.push_back(mean);
    out.stddev.push_back(out.runs.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0);
  }
  return out;
}

void write_bench_csv(const BenchResult& result, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(10) << "t_sim_s";
  for (const auto seed : result.seeds) out << ",run_seed_" << seed;
  out << ",mean,stddev\n";
  for (std::size_t k = 0; k < result.grid.size(); ++k) {
    out << result.grid[k];
    for (const auto& c : result.curves) out << ',' << c[k];
    out << ',' << result.mean[k] << ',' << result.stddev[k] << '\n';
  }
}

}  // namespace bzx
