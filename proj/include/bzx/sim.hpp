#pragma once

#include "bzx/gain.hpp"
#include "bzx/planner.hpp"
#include "bzx/world.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bzx {

enum class RunMode { Deterministic, Threaded };

struct GpSettings {
  double noise = 1e-6;
  double min_separation = 1.5;  ///< m
  std::size_t capacity = 500;
  std::size_t reevaluation_budget = 20;  ///< stale samples refreshed per iteration
  std::size_t evaluation_budget = 10;    ///< explicit evaluations of new endpoints per iteration
  double variance_threshold = 0.05;      ///< normalised posterior variance above which an endpoint is evaluated
};

struct ExplorationConfig {
  PlannerParams planner;
  CameraModel camera;
  CostWeights weights;
  GainRayConfig rays;
  GpSettings gp;
  double map_res = 0.2;
  std::uint64_t seed = 1;
  RunMode mode = RunMode::Deterministic;
  double sensor_rate = 5.0;  ///< Hz
  double body_radius = 1.0;  ///< m
  Eigen::Vector3d start{0.0, 0.0, 1.5};
  double start_yaw = 0.0;
  int initial_scans = 8;
  double g_zero_fraction = 0.01;  ///< stop threshold as a fraction of the FoV volume
  int termination_iterations = 5;
  /// Once local gains are exhausted, fly toward the nearest cached sample with at least this
  /// fraction of the FoV volume.
  double relocation_gain_fraction = 0.1;
  /// Iterations without getting closer before a relocation goal is dropped.
  int relocation_patience = 8;
  double max_sim_time = 1500.0;  ///< s
  double max_wall_time = 600.0;  ///< s
  /// Deterministic mode: simulated seconds of planning charged per sampling attempt.
  double attempt_cost = 0.01;
  /// Threaded mode: wall seconds of planning per simulated second of flight.
  double threaded_time_scale = 0.05;
  std::size_t max_tree_nodes = 2000;
  /// Text the config was parsed from, echoed into run outputs.
  std::string source;

  void validate() const;
};

ExplorationConfig parse_config(const std::string& text);
ExplorationConfig load_config(const std::filesystem::path& path);
std::string format_config(const ExplorationConfig& config);

struct FlightResult {
  std::vector<Pose> poses;  ///< scan poses
  std::size_t scans = 0;
  double distance = 0.0;                                         ///< m
  double min_clearance = std::numeric_limits<double>::infinity();  ///< against the scene, m
};

/// Flies `segment` with perfect tracking: a depth scan at every sensor tick, body-swept voxels
/// cleared, path length from at least 200 samples.
FlightResult simulate_flight(const BezierSegment& segment, OccupancyGrid& map, const Scene& scene,
                             const CameraModel& camera, double sensor_rate, double body_radius = 0.0);

struct MetricsRow {
  double t_sim = 0.0;
  double explored = 0.0;
  double distance = 0.0;
  std::size_t tree_nodes = 0;
  std::size_t cache_size = 0;
  double tau = 0.0;
  std::string event;

  bool operator==(const MetricsRow&) const = default;
};

struct EventRecord {
  double t_sim = 0.0;
  std::string kind;  ///< commit, deadline_violation, planning_failure, idle, safe_execution
  bool operator==(const EventRecord&) const = default;
};

struct ExecutedSegment {
  BezierSegment segment;
  std::string kind;  ///< initial, commit, safe
  double t_start = 0.0;
  /// Map the segment was checked against before execution.
  std::shared_ptr<const OccupancyGrid> snapshot;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<EventRecord> events;
  std::vector<ExecutedSegment> executed;
  std::size_t commits = 0;
  std::size_t safe_executions = 0;
  std::size_t deadline_violations = 0;
  std::size_t planning_failures = 0;
  std::size_t iterations = 0;
  double completion_time = 0.0;  ///< simulated s
  double total_distance = 0.0;   ///< m
  double final_volume = 0.0;     ///< m^3
  double min_clearance = std::numeric_limits<double>::infinity();
  double wall_time = 0.0;  ///< s
  std::string termination;
  OccupancyGrid final_map;
  TrajectoryTree final_tree;
};

/// Per-iteration hook, e.g. for tree dumps.
using IterationObserver = std::function<void(std::size_t iteration, const TrajectoryTree& tree)>;

/// Full exploration mission: initial rotation, then the receding-horizon loop until the best
/// available gain stays below the threshold or a time cap is hit.
RunResult run_exploration(const ExplorationConfig& config, const Scene& scene,
                          std::optional<OccupancyGrid> initial_map = std::nullopt,
                          const IterationObserver& observer = {});

/// Known volume after scanning from a dense lattice of collision-free poses; an upper reference
/// for what any flight can observe.
double observable_volume(const Scene& scene, const CameraModel& camera, double map_res, double clearance,
                         double spacing = 1.0);

/// Segment-level checks on a finished run. Each entry describes one violation.
std::vector<std::string> check_executed_chain(const std::vector<ExecutedSegment>& executed,
                                              const PlannerParams& params, double tol = 1e-9);

void write_metrics_csv(const RunResult& run, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
nlohmann::json run_summary(const RunResult& run, const ExplorationConfig& config);

/// Writes metrics.csv, summary.json, the final map and executed segments with their map snapshots.
void write_run(const RunResult& run, const ExplorationConfig& config, const std::filesystem::path& dir);

struct ReplayReport {
  std::size_t trees = 0;
  std::size_t segments = 0;
  std::vector<std::string> violations;
};

/// Re-checks a run directory: tree invariants, chain continuity, segment feasibility against the
/// recorded snapshots, metric monotonicity.
ReplayReport replay_run(const std::filesystem::path& dir, const PlannerParams& params);

struct BenchResult {
  std::vector<std::uint64_t> seeds;
  std::vector<RunResult> runs;
  std::vector<double> grid;                 ///< s
  std::vector<std::vector<double>> curves;  ///< explored volume per run on the grid
  std::vector<double> mean, stddev;
};

/// Explored volume curves of several seeds on a shared time grid.
BenchResult bench(const ExplorationConfig& config, const Scene& scene, const std::vector<std::uint64_t>& seeds,
                  double grid_step = 5.0);
void write_bench_csv(const BenchResult& result, const std::filesystem::path& path);

}  // namespace bzx
