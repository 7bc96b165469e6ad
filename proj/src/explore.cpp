#include "bzx/sim.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <variant>

namespace bzx {

namespace {

using Clock = std::chrono::steady_clock;
using Snapshot = std::shared_ptr<const OccupancyGrid>;

template <typename T>
class BlockingQueue {
 public:
  void push(T v) {
    {
      std::lock_guard<std::mutex> lock(m_);
      q_.push_back(std::move(v));
    }
    cv_.notify_one();
  }
  T pop() {
    std::unique_lock<std::mutex> lock(m_);
    cv_.wait(lock, [&] { return !q_.empty(); });
    T v = std::move(q_.front());
    q_.pop_front();
    return v;
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::deque<T> q_;
};

/// What the planner sees of the GP worker: an immutable posterior and the cache it came from.
struct GpView {
  GainCache cache;
  GpPosterior posterior;
  double tau = 0.0;
};

enum class Decision { Commit, Relocate, DeadlineViolation, PlanningFailure, Idle };

const char* decision_name(Decision d) {
  switch (d) {
    case Decision::Commit: return "commit";
    case Decision::Relocate: return "relocate";
    case Decision::DeadlineViolation: return "deadline_violation";
    case Decision::PlanningFailure: return "planning_failure";
    case Decision::Idle: return "idle";
  }
  return "?";
}

struct DecisionResult {
  Decision kind = Decision::Idle;
  ExecutedSegment next;
  std::vector<GainSample> samples;  ///< explicit evaluations made while deciding
};

class Mission {
 public:
  explicit Mission(const ExplorationConfig& config)
      : cfg_(config),
        v_fov_(fov_volume(config.camera)),
        cache_(config.gp.min_separation, config.gp.capacity),
        tau_(config.planner.sampling_radius),
        rng_(config.seed) {}

  // --- GP worker --------------------------------------------------------------------------------

  void gp_refresh(const Snapshot& snap) {
    ++stamp_;
    cache_reevaluate(cache_, *snap, cfg_.camera, cfg_.rays, cfg_.gp.reevaluation_budget, stamp_);
    tau_ = gp_fit_tau(cache_, v_fov_, cfg_.planner.sampling_radius, cfg_.gp.noise, tau_);
    publish();
  }

  void gp_ingest(const std::vector<GainSample>& samples) {
    bool changed = false;
    for (GainSample s : samples) {
      s.stamp = stamp_;
      changed |= cache_insert(cache_, s);
    }
    if (changed) publish();
  }

  std::shared_ptr<const GpView> view() const {
    std::lock_guard<std::mutex> lock(view_mutex_);
    return view_;
  }

  // --- evaluator --------------------------------------------------------------------------------

  std::vector<GainSample> evaluate(const Snapshot& snap, const std::vector<Eigen::Vector3d>& points) const {
    std::vector<GainSample> out;
    for (const auto& p : points) {
      const YawGain g = explicit_gain(*snap, p, cfg_.camera, cfg_.rays);
      out.push_back({p, g.best_gain, g.best_yaw, 0, 0});
    }
    return out;
  }

  // --- planner ----------------------------------------------------------------------------------

  void init_tree(const BezierSegment& root, const Snapshot& snap) {
    TrajectoryNode n;
    n.segment = root;
    n.cost = segment_cost(root, cfg_.weights);
    n.map_revision = snap->revision();
    tree_ = TrajectoryTree(std::move(n));
    set_safe_after(root, snap);
  }

  /// Grows the tree and returns new endpoints worth an explicit evaluation.
  std::vector<Eigen::Vector3d> plan(const Snapshot& snap, const ExpandBudget& budget) {
    const auto v = view();
    const GainQuery gq = query(v, snap);
    reevaluate_gains(tree_, gq);
    ExpandBudget b = budget;
    if (goal_) b.goal = goal_->position;
    const NodeId first_new = tree_.nodes().empty() ? 0 : tree_.nodes().rbegin()->first + 1;
    last_expand_ = expand_tree(tree_, *snap, cfg_.planner, cfg_.weights, gq, rng_, b);

    std::vector<std::pair<double, Eigen::Vector3d>> ranked;
    for (auto it = tree_.nodes().lower_bound(first_new); it != tree_.nodes().end(); ++it) {
      const Eigen::Vector3d p = it->second.segment.end();
      const double var = v->posterior.predict(p).variance;
      if (var > cfg_.gp.variance_threshold && v->cache.accepts(p)) ranked.emplace_back(var, p);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Eigen::Vector3d> picked;
    for (const auto& [var, p] : ranked) {
      if (picked.size() >= cfg_.gp.evaluation_budget) break;
      const bool spaced = std::all_of(picked.begin(), picked.end(), [&](const Eigen::Vector3d& q) {
        return (q - p).norm() >= cfg_.gp.min_separation;
      });
      if (spaced) picked.push_back(p);
    }
    return picked;
  }

  DecisionResult decide(const Snapshot& snap) {
    DecisionResult out;
    const auto v = view();
    const GainQuery gq = query(v, snap);
    reevaluate_gains(tree_, gq);

    // Confirm the leading candidates with explicit evaluations before trusting the model.
    std::vector<NodeId> verified;
    for (std::size_t k = 0; k < kVerificationBudget; ++k) {
      const auto best = best_node(tree_);
      if (!best || std::find(verified.begin(), verified.end(), *best) != verified.end()) break;
      auto& node = tree_.node(*best);
      const YawGain g = explicit_gain(*snap, node.segment.end(), cfg_.camera, cfg_.rays);
      node.gain = g.best_gain;
      verified.push_back(*best);
      out.samples.push_back({node.segment.end(), g.best_gain, g.best_yaw, 0, 0});
    }
    const auto best = best_node(tree_);
    const double best_gain = best ? tree_.node(*best).gain : 0.0;
    const double g_zero = cfg_.g_zero_fraction * v_fov_;

    std::optional<Commit> commit;
    if (!best && last_expand_.fallback) {
      out.kind = Decision::PlanningFailure;
    } else if (best_gain >= g_zero) {
      goal_.reset();
      commit = commit_next(tree_, *snap, cfg_.planner, cfg_.weights);
      out.kind = commit ? Decision::Commit : Decision::DeadlineViolation;
    } else if (update_goal(*v, *snap)) {
      commit = commit_toward(tree_, goal_->position, *snap, cfg_.planner, cfg_.weights);
      out.kind = commit ? Decision::Relocate : Decision::DeadlineViolation;
    } else {
      out.kind = Decision::Idle;
    }
    if (commit) {
      out.next = {commit->executed.segment, "commit", 0.0, snap};
      safe_ = commit->safe;
      safe_snapshot_ = snap;
    }

    if (!commit) {
      out.next = {safe_, "safe", 0.0, safe_snapshot_};
      rewire_safe(tree_, safe_, *snap, cfg_.planner, cfg_.weights, gq);
      set_safe_after(safe_, snap);
    }
    tree_.prune(cfg_.max_tree_nodes);
    return out;
  }

  const TrajectoryTree& tree() const { return tree_; }
  double v_fov() const { return v_fov_; }

 private:
  static constexpr std::size_t kVerificationBudget = 20;
  static constexpr double kGoalReached = 1.0;    // m
  static constexpr double kGoalProgress = 0.25;  // m

  static constexpr double kCandidateSpacing = 1.0;  // m
  static constexpr std::size_t kCandidateBudget = 40;

  struct Goal {
    Eigen::Vector3d position;
    double best_distance = std::numeric_limits<double>::infinity();
    int stalled = 0;
  };

  bool abandoned(const Eigen::Vector3d& p) const {
    return std::any_of(abandoned_.begin(), abandoned_.end(),
                       [&](const Eigen::Vector3d& q) { return (p - q).norm() < kCandidateSpacing; });
  }

  /// Cached samples with a high predicted gain, then free voxels bordering unknown space.
  std::vector<Eigen::Vector3d> goal_candidates(const GpView& v, const OccupancyGrid& snap, double threshold) const {
    std::vector<Eigen::Vector3d> out;
    for (const auto& [id, s] : v.cache.samples())
      if (s.gain >= threshold) out.push_back(s.position);
    const Eigen::Vector3i n = snap.dims();
    static const Eigen::Vector3i kNeighbours[] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int z = 0; z < n.z(); ++z)
      for (int y = 0; y < n.y(); ++y)
        for (int x = 0; x < n.x(); ++x) {
          const Eigen::Vector3i idx{x, y, z};
          if (snap.at(idx) != VoxelState::Free) continue;
          const bool frontier = std::any_of(std::begin(kNeighbours), std::end(kNeighbours), [&](const Eigen::Vector3i& d) {
            const Eigen::Vector3i m = idx + d;
            return snap.in_bounds(m) && snap.at(m) == VoxelState::Unknown;
          });
          if (frontier) out.push_back(snap.center_of(idx));
        }
    return out;
  }

  /// Keeps or picks a relocation goal: the nearest candidate whose explicit gain is still worth
  /// the trip. Goals that are reached or stop getting closer are dropped for good.
  bool update_goal(const GpView& v, const OccupancyGrid& snap) {
    const double threshold = cfg_.relocation_gain_fraction * v_fov_;
    const Eigen::Vector3d here = tree_.node(tree_.root()).segment.end();
    if (goal_) {
      const double d = (goal_->position - here).norm();
      if (d < goal_->best_distance - kGoalProgress) {
        goal_->best_distance = d;
        goal_->stalled = 0;
      } else {
        ++goal_->stalled;
      }
      if (d < kGoalReached || goal_->stalled >= cfg_.relocation_patience) {
        abandoned_.push_back(goal_->position);
        goal_.reset();
      }
    }
    if (goal_) return true;

    auto candidates = goal_candidates(v, snap, threshold);
    std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
      return (a - here).squaredNorm() < (b - here).squaredNorm();
    });
    std::vector<Eigen::Vector3d> tried;
    for (const auto& c : candidates) {
      if (tried.size() >= kCandidateBudget) break;
      const double d = (c - here).norm();
      if (d < kGoalReached || abandoned(c)) continue;
      if (std::any_of(tried.begin(), tried.end(), [&](const auto& t) { return (c - t).norm() < kCandidateSpacing; }))
        continue;
      tried.push_back(c);
      if (explicit_gain(snap, c, cfg_.camera, cfg_.rays).best_gain < threshold) {
        abandoned_.push_back(c);
        continue;
      }
      goal_ = Goal{c, d, 0};
      return true;
    }
    return false;
  }

  void publish() {
    auto v = std::make_shared<GpView>(GpView{cache_, GpPosterior(cache_, {v_fov_, tau_, cfg_.gp.noise}), tau_});
    std::lock_guard<std::mutex> lock(view_mutex_);
    view_ = std::move(v);
  }

  GainQuery query(const std::shared_ptr<const GpView>& v, const Snapshot& snap) const {
    GainQuery gq;
    gq.gain = [v](const Eigen::Vector3d& p) { return v->posterior.mean(p); };
    gq.best_yaw = [v, snap, this](const Eigen::Vector3d& p) {
      const auto near = v->cache.nearest(p);
      if (near && (near->position - p).norm() < cfg_.gp.min_separation) return near->best_yaw;
      return explicit_gain(*snap, p, cfg_.camera, cfg_.rays).best_yaw;
    };
    return gq;
  }

  void set_safe_after(const BezierSegment& seg, const Snapshot& snap) {
    auto safe = plan_safe_segment(seg, *snap, cfg_.planner, cfg_.weights);
    safe_ = safe ? *safe : solve_safe_segment(seg, cfg_.planner.min_time, cfg_.weights);
    safe_snapshot_ = snap;
  }

  const ExplorationConfig& cfg_;
  double v_fov_;

  // GP worker state.
  GainCache cache_;
  double tau_;
  std::uint64_t stamp_ = 0;
  mutable std::mutex view_mutex_;
  std::shared_ptr<const GpView> view_;

  // Planner state.
  TrajectoryTree tree_;
  std::mt19937_64 rng_;
  BezierSegment safe_;
  Snapshot safe_snapshot_;
  ExpandResult last_expand_;
  std::optional<Goal> goal_;
  std::vector<Eigen::Vector3d> abandoned_;
};

/// Main-thread side: ground truth, the live map and the metrics.
class World {
 public:
  World(const ExplorationConfig& config, const Scene& scene, OccupancyGrid map)
      : cfg_(config), scene_(scene), map_(std::move(map)) {}

  void initial_rotation(RunResult& r) {
    mark_body_free(map_, scene_, cfg_.start, cfg_.body_radius);
    for (int k = 0; k < cfg_.initial_scans; ++k) {
      const double yaw = cfg_.start_yaw + 2.0 * M_PI * k / cfg_.initial_scans;
      integrate_depth_scan(map_, scene_, {cfg_.start, yaw}, cfg_.camera);
      t_ += 1.0;
      row(r, "scan", 0, 0, 0.0);
    }
  }

  void fly(const ExecutedSegment& seg, RunResult& r) {
    const FlightResult f =
        simulate_flight(seg.segment, map_, scene_, cfg_.camera, cfg_.sensor_rate, cfg_.body_radius);
    t_ += seg.segment.duration;
    distance_ += f.distance;
    r.min_clearance = std::min(r.min_clearance, f.min_clearance);
  }

  void row(RunResult& r, const std::string& event, std::size_t nodes, std::size_t cache, double tau) {
    r.rows.push_back({t_, explored_volume(map_), distance_, nodes, cache, tau, event});
  }

  Snapshot snapshot() const { return std::make_shared<const OccupancyGrid>(map_); }
  double t() const { return t_; }
  double distance() const { return distance_; }
  const OccupancyGrid& map() const { return map_; }

 private:
  const ExplorationConfig& cfg_;
  const Scene& scene_;
  OccupancyGrid map_;
  double t_ = 0.0;
  double distance_ = 0.0;
};

void record(RunResult& r, World& w, const Mission& m, const DecisionResult& d, std::size_t cache, double tau) {
  const std::string kind = decision_name(d.kind);
  r.events.push_back({w.t(), kind});
  switch (d.kind) {
    case Decision::Commit:
    case Decision::Relocate: ++r.commits; break;
    case Decision::DeadlineViolation: ++r.deadline_violations; break;
    case Decision::PlanningFailure: ++r.planning_failures; break;
    case Decision::Idle: break;
  }
  if (d.kind != Decision::Commit && d.kind != Decision::Relocate) {
    r.events.push_back({w.t(), "safe_execution"});
    ++r.safe_executions;
  }
  w.row(r, kind, m.tree().active_count(), cache, tau);
}

struct LoopControl {
  int low_gain = 0;
  bool done(const ExplorationConfig& cfg, const DecisionResult& d, const World& w, Clock::time_point wall0,
            RunResult& r) {
    if (d.kind == Decision::Commit || d.kind == Decision::Relocate) low_gain = 0;
    else if (d.kind != Decision::DeadlineViolation) ++low_gain;
    if (low_gain >= cfg.termination_iterations) r.termination = "converged";
    else if (w.t() >= cfg.max_sim_time) r.termination = "sim_time_cap";
    else if (std::chrono::duration<double>(Clock::now() - wall0).count() >= cfg.max_wall_time)
      r.termination = "wall_time_cap";
    return !r.termination.empty();
  }
};

void finish(RunResult& r, const World& w, const Mission& m, Clock::time_point wall0) {
  r.completion_time = w.t();
  r.total_distance = w.distance();
  r.final_volume = explored_volume(w.map());
  r.final_map = w.map();
  r.final_tree = m.tree();
  r.wall_time = std::chrono::duration<double>(Clock::now() - wall0).count();
}

RunResult run_deterministic(const ExplorationConfig& cfg, const Scene& scene, OccupancyGrid map,
                            const IterationObserver& observer) {
  const auto wall0 = Clock::now();
  RunResult r;
  World world(cfg, scene, std::move(map));
  Mission mission(cfg);
  world.initial_rotation(r);

  auto snap = world.snapshot();
  ExecutedSegment current{BezierSegment::hover(cfg.start, cfg.start_yaw, cfg.planner.min_time), "initial", 0.0, snap};
  mission.init_tree(current.segment, snap);
  mission.gp_ingest(mission.evaluate(snap, {cfg.start}));
  mission.gp_refresh(snap);

  LoopControl control;
  while (true) {
    ++r.iterations;
    snap = world.snapshot();
    mission.gp_refresh(snap);
    ExpandBudget budget;
    budget.max_attempts = static_cast<std::size_t>(std::lround(current.segment.duration / cfg.attempt_cost));
    const auto picked = mission.plan(snap, budget);
    mission.gp_ingest(mission.evaluate(snap, picked));

    current.t_start = world.t();
    r.executed.push_back(current);
    world.fly(current, r);

    const auto snap_now = world.snapshot();
    DecisionResult d = mission.decide(snap_now);
    mission.gp_ingest(d.samples);
    const auto v = mission.view();
    record(r, world, mission, d, v->cache.size(), v->tau);
    if (observer) observer(r.iterations, mission.tree());
    current = std::move(d.next);
    if (control.done(cfg, d, world, wall0, r)) break;
  }
  finish(r, world, mission, wall0);
  return r;
}

RunResult run_threaded(const ExplorationConfig& cfg, const Scene& scene, OccupancyGrid map,
                       const IterationObserver& observer) {
  const auto wall0 = Clock::now();
  RunResult r;
  World world(cfg, scene, std::move(map));
  Mission mission(cfg);
  world.initial_rotation(r);

  auto snap = world.snapshot();
  ExecutedSegment current{BezierSegment::hover(cfg.start, cfg.start_yaw, cfg.planner.min_time), "initial", 0.0, snap};
  mission.init_tree(current.segment, snap);
  mission.gp_ingest(mission.evaluate(snap, {cfg.start}));
  mission.gp_refresh(snap);

  struct Refresh { Snapshot snap; };
  struct Ingest { std::vector<GainSample> samples; };
  struct Stop {};
  struct Evaluate { Snapshot snap; std::vector<Eigen::Vector3d> points; };
  struct Plan { Snapshot snap; ExpandBudget budget; };
  struct Decide { Snapshot snap; };
  using GpMsg = std::variant<Refresh, Ingest, Stop>;
  using EvalMsg = std::variant<Evaluate, Stop>;
  using PlanMsg = std::variant<Plan, Decide, Stop>;

  BlockingQueue<GpMsg> gp_q;
  BlockingQueue<EvalMsg> eval_q;
  BlockingQueue<PlanMsg> plan_q;
  BlockingQueue<DecisionResult> reply_q;

  std::thread gp_thread([&] {
    while (true) {
      GpMsg msg = gp_q.pop();
      if (std::holds_alternative<Stop>(msg)) return;
      if (auto* m = std::get_if<Refresh>(&msg)) mission.gp_refresh(m->snap);
      if (auto* m = std::get_if<Ingest>(&msg)) mission.gp_ingest(m->samples);
    }
  });
  std::thread eval_thread([&] {
    while (true) {
      EvalMsg msg = eval_q.pop();
      if (std::holds_alternative<Stop>(msg)) return;
      const auto& m = std::get<Evaluate>(msg);
      gp_q.push(Ingest{mission.evaluate(m.snap, m.points)});
    }
  });
  std::thread plan_thread([&] {
    while (true) {
      PlanMsg msg = plan_q.pop();
      if (std::holds_alternative<Stop>(msg)) return;
      if (auto* m = std::get_if<Plan>(&msg)) {
        auto picked = mission.plan(m->snap, m->budget);
        eval_q.push(Evaluate{m->snap, std::move(picked)});
      }
      if (auto* m = std::get_if<Decide>(&msg)) {
        DecisionResult d = mission.decide(m->snap);
        gp_q.push(Ingest{d.samples});
        reply_q.push(std::move(d));
      }
    }
  });

  LoopControl control;
  while (true) {
    ++r.iterations;
    snap = world.snapshot();
    gp_q.push(Refresh{snap});
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                             std::chrono::duration<double>(current.segment.duration * cfg.threaded_time_scale));
    ExpandBudget budget;
    budget.max_attempts = 10 * static_cast<std::size_t>(std::lround(current.segment.duration / cfg.attempt_cost));
    budget.deadline = deadline;
    plan_q.push(Plan{snap, budget});

    current.t_start = world.t();
    r.executed.push_back(current);
    world.fly(current, r);
    std::this_thread::sleep_until(deadline);

    plan_q.push(Decide{world.snapshot()});
    DecisionResult d = reply_q.pop();
    const auto v = mission.view();
    record(r, world, mission, d, v->cache.size(), v->tau);
    if (observer) observer(r.iterations, mission.tree());
    current = std::move(d.next);
    if (control.done(cfg, d, world, wall0, r)) break;
  }
  plan_q.push(Stop{});
  plan_thread.join();
  eval_q.push(Stop{});
  eval_thread.join();
  gp_q.push(Stop{});
  gp_thread.join();
  finish(r, world, mission, wall0);
  return r;
}

}  // namespace

RunResult run_exploration(const ExplorationConfig& config, const Scene& scene, std::optional<OccupancyGrid> initial_map,
                          const IterationObserver& observer) {
  config.validate();
  if (!scene.bounds.contains(config.start) || scene.in_obstacle(config.start))
    throw std::invalid_argument("start pose is outside the scene or inside an obstacle");
  OccupancyGrid map = initial_map ? std::move(*initial_map) : OccupancyGrid::covering(scene.bounds, config.map_res);
  if (config.mode == RunMode::Threaded) return run_threaded(config, scene, std::move(map), observer);
  return run_deterministic(config, scene, std::move(map), observer);
}

}  // namespace bzx
