#pragma once

#include "bzx/bezier.hpp"
#include "bzx/cost.hpp"
#include "bzx/world.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bzx {

struct PlannerParams {
  double sampling_radius = 3.0;  ///< r_sp, m
  int max_sampled_nodes = 40;    ///< n_max
  double min_time = 1.0;         ///< s
  double max_time = 5.0;         ///< s
  double time_res = 0.5;         ///< s
  double d_safe = 0.3;           ///< m
  double max_vel = 1.5;          ///< m/s
  double max_acc = 1.5;          ///< m/s^2
  int max_sampling_attempts = 100;
  /// Consecutive failures around the best node before sampling around a random active node.
  int fallback_after_failures = 10;

  void validate() const;
  /// min_time, min_time + time_res, ..., max_time.
  std::vector<double> durations() const;
};

using NodeId = std::uint64_t;

struct TrajectoryNode {
  NodeId id = 0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  BezierSegment segment;
  double gain = 0.0;  ///< m^3
  double cost = 0.0;
  bool active = true;
  /// Executed, or rebuilt elsewhere by rewiring; no longer offered as a rewiring candidate.
  bool consumed = false;
  std::uint64_t map_revision = 0;  ///< revision of the map the segment was checked against
};

/// Id-indexed node store. Exactly one active root; active nodes have fully active root paths.
/// Deactivated nodes stay in the store as rewiring candidates until pruned.
class TrajectoryTree {
 public:
  TrajectoryTree() = default;
  explicit TrajectoryTree(TrajectoryNode root);

  NodeId root() const { return root_; }
  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  const TrajectoryNode& node(NodeId id) const { return nodes_.at(id); }
  TrajectoryNode& node(NodeId id) { return nodes_.at(id); }
  const std::map<NodeId, TrajectoryNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t active_count() const;
  std::vector<NodeId> active_ids() const;

  /// Attaches `node` under its (active) parent and returns the new id.
  NodeId insert(TrajectoryNode node);
  /// Ids from the root down to `id`, both included.
  std::vector<NodeId> path_from_root(NodeId id) const;
  void deactivate_subtree(NodeId id);
  /// `id` (a child of the root) becomes the root; the old root is consumed and every node
  /// outside the subtree of `id` is deactivated.
  void advance_root(NodeId id);
  /// Drops whole inactive trees, oldest first, until at most `max_nodes` remain.
  void prune(std::size_t max_nodes);

  nlohmann::json to_json() const;
  static TrajectoryTree from_json(const nlohmann::json& j);

 private:
  std::map<NodeId, TrajectoryNode> nodes_;
  NodeId root_ = 0;
  NodeId next_id_ = 0;
};

/// Violations of the tree invariants; empty when the tree is consistent.
std::vector<std::string> check_tree_invariants(const TrajectoryTree& tree, double tol = 1e-9);

/// Largest deviation of the first control points of `next` from the continuity prefix of `prev`.
double continuity_error(const BezierSegment& prev, const BezierSegment& next);

/// Gain source for new and refreshed nodes: predicted gain and preferred heading at a point.
struct GainQuery {
  std::function<double(const Eigen::Vector3d&)> gain;
  std::function<double(const Eigen::Vector3d&)> best_yaw;
};

std::optional<Eigen::Vector3d> sample_viewpoint(const TrajectoryNode& best, const OccupancyGrid& map,
                                                const PlannerParams& params, std::mt19937_64& rng);

/// Envelope test plus dynamic bounds for a complete segment.
bool segment_is_feasible(const BezierSegment& segment, const OccupancyGrid& map, const PlannerParams& params);

/// Connects `parent` to `r5` with the cheapest feasible duration. The returned node has no id yet.
std::optional<TrajectoryNode> build_node(const TrajectoryNode& parent, const Eigen::Vector3d& r5,
                                         const OccupancyGrid& map, const PlannerParams& params,
                                         const CostWeights& weights, const GainQuery& gain_query);

/// Sum of gains over sum of costs along the root path, root excluded. 0 for the root.
double utility(const TrajectoryTree& tree, NodeId id);
/// Active non-root node with the highest utility (ties to the lower id).
std::optional<NodeId> best_node(const TrajectoryTree& tree);

struct ExpandBudget {
  std::size_t max_attempts = 1000;
  std::optional<std::chrono::steady_clock::time_point> deadline;
  /// When set, grow from the active node closest to this point instead of the best node, and
  /// count a new node as an improvement when it gets closer.
  std::optional<Eigen::Vector3d> goal;
};

struct ExpandResult {
  std::size_t attempts = 0;
  std::size_t inserted = 0;
  /// Nothing could be inserted: the caller should fall back to the safe segment.
  bool fallback = false;
};

ExpandResult expand_tree(TrajectoryTree& tree, const OccupancyGrid& map, const PlannerParams& params,
                         const CostWeights& weights, const GainQuery& gain_query, std::mt19937_64& rng,
                         const ExpandBudget& budget);

struct Commit {
  TrajectoryNode executed;
  BezierSegment safe;
};

/// Commits the first node of the best branch whose first segment is still feasible on `map`
/// and admits a feasible stopping segment. Branches failing either test are deactivated.
/// Returns nullopt when nothing can be committed.
std::optional<Commit> commit_next(TrajectoryTree& tree, const OccupancyGrid& map, const PlannerParams& params,
                                  const CostWeights& weights);

/// Same as commit_next, ranking branches by how close their leaf gets to `goal`.
std::optional<Commit> commit_toward(TrajectoryTree& tree, const Eigen::Vector3d& goal, const OccupancyGrid& map,
                                    const PlannerParams& params, const CostWeights& weights);

/// Longest feasible stopping segment after `prev`, trying durations from max_time down.
std::optional<BezierSegment> plan_safe_segment(const BezierSegment& prev, const OccupancyGrid& map,
                                               const PlannerParams& params, const CostWeights& weights);

/// Inserts the executed `safe` segment (a continuation of the current root) as the new root and
/// reconnects unconsumed endpoints within r_sp of its end. Returns the number reattached.
std::size_t rewire_safe(TrajectoryTree& tree, const BezierSegment& safe, const OccupancyGrid& map,
                        const PlannerParams& params, const CostWeights& weights, const GainQuery& gain_query);

/// Refreshes the gain of every active non-root node. Returns the number refreshed.
std::size_t reevaluate_gains(TrajectoryTree& tree, const GainQuery& gain_query);

nlohmann::json segment_to_json(const BezierSegment& segment);
BezierSegment segment_from_json(const nlohmann::json& j);

}  // namespace bzx
