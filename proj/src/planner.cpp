#include "bzx/planner.hpp"

#include "bzx/gain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bzx {

void PlannerParams::validate() const {
  if (!(sampling_radius > 0.0)) throw std::invalid_argument("planner: sampling radius must be positive");
  if (max_sampled_nodes <= 0) throw std::invalid_argument("planner: sampled nodes must be positive");
  if (!(min_time > 0.0)) throw std::invalid_argument("planner: min_time must be positive");
  if (!(max_time >= min_time)) throw std::invalid_argument("planner: max_time below min_time");
  if (!(time_res > 0.0)) throw std::invalid_argument("planner: time_res must be positive");
  const double steps = (max_time - min_time) / time_res;
  if (std::abs(steps - std::round(steps)) > 1e-9) throw std::invalid_argument("planner: time_res must divide max_time - min_time");
  if (!(d_safe >= 0.0)) throw std::invalid_argument("planner: d_safe must be non-negative");
  if (!(max_vel > 0.0 && max_acc > 0.0)) throw std::invalid_argument("planner: dynamic limits must be positive");
  if (max_sampling_attempts <= 0) throw std::invalid_argument("planner: sampling attempts must be positive");
  if (fallback_after_failures <= 0) throw std::invalid_argument("planner: fallback threshold must be positive");
}

std::vector<double> PlannerParams::durations() const {
  const int steps = static_cast<int>(std::lround((max_time - min_time) / time_res));
  std::vector<double> out;
  for (int i = 0; i <= steps; ++i) out.push_back(min_time + i * time_res);
  return out;
}

// --- tree --------------------------------------------------------------------------------------

TrajectoryTree::TrajectoryTree(TrajectoryNode root) {
  root.id = next_id_++;
  root.parent.reset();
  root.children.clear();
  root.active = true;
  root_ = root.id;
  nodes_.emplace(root.id, std::move(root));
}

std::size_t TrajectoryTree::active_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const auto& kv) { return kv.second.active; }));
}

std::vector<NodeId> TrajectoryTree::active_ids() const {
  std::vector<NodeId> out;
  for (const auto& [id, n] : nodes_)
    if (n.active) out.push_back(id);
  return out;
}

NodeId TrajectoryTree::insert(TrajectoryNode node) {
  if (!node.parent) throw std::invalid_argument("TrajectoryTree::insert: node needs a parent");
  auto& parent = nodes_.at(*node.parent);
  if (!parent.active) throw std::invalid_argument("TrajectoryTree::insert: parent is inactive");
  node.id = next_id_++;
  node.children.clear();
  node.active = true;
  node.consumed = false;
  parent.children.push_back(node.id);
  const NodeId id = node.id;
  nodes_.emplace(id, std::move(node));
  return id;
}

std::vector<NodeId> TrajectoryTree::path_from_root(NodeId id) const {
  std::vector<NodeId> path;
  std::optional<NodeId> cur = id;
  while (cur) {
    path.push_back(*cur);
    if (*cur == root_) break;
    cur = nodes_.at(*cur).parent;
    if (path.size() > nodes_.size()) throw std::logic_error("TrajectoryTree: cycle");
  }
  if (path.back() != root_) throw std::invalid_argument("TrajectoryTree::path_from_root: node not below root");
  std::reverse(path.begin(), path.end());
  return path;
}

void TrajectoryTree::deactivate_subtree(NodeId id) {
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    auto& n = nodes_.at(stack.back());
    stack.pop_back();
    n.active = false;
    stack.insert(stack.end(), n.children.begin(), n.children.end());
  }
}

void TrajectoryTree::advance_root(NodeId id) {
  auto& next = nodes_.at(id);
  if (!next.parent || *next.parent != root_) throw std::invalid_argument("advance_root: node is not a child of the root");
  auto& old = nodes_.at(root_);
  old.children.erase(std::remove(old.children.begin(), old.children.end(), id), old.children.end());
  for (const NodeId c : old.children) deactivate_subtree(c);
  old.active = false;
  old.consumed = true;
  next.parent.reset();
  root_ = id;
}

void TrajectoryTree::prune(std::size_t max_nodes) {
  while (nodes_.size() > max_nodes) {
    auto top = std::find_if(nodes_.begin(), nodes_.end(),
                            [&](const auto& kv) { return kv.first != root_ && !kv.second.parent; });
    if (top == nodes_.end()) return;
    std::vector<NodeId> stack{top->first};
    while (!stack.empty()) {
      const NodeId cur = stack.back();
      stack.pop_back();
      const auto it = nodes_.find(cur);
      stack.insert(stack.end(), it->second.children.begin(), it->second.children.end());
      nodes_.erase(it);
    }
  }
}

nlohmann::json segment_to_json(const BezierSegment& s) {
  nlohmann::json pos = nlohmann::json::array();
  for (int i = 0; i <= kPositionDegree; ++i) {
    const Eigen::Vector3d p = s.pos.point(i);
    pos.push_back({p.x(), p.y(), p.z()});
  }
  nlohmann::json yaw = nlohmann::json::array();
  for (int i = 0; i <= kYawDegree; ++i) yaw.push_back(s.yaw.point(i)(0));
  return {{"duration", s.duration}, {"pos", pos}, {"yaw", yaw}};
}

BezierSegment segment_from_json(const nlohmann::json& j) {
  Eigen::Matrix<double, 3, Eigen::Dynamic> cp(3, kPositionDegree + 1);
  Eigen::Matrix<double, 1, Eigen::Dynamic> cy(1, kYawDegree + 1);
  const auto& pos = j.at("pos");
  const auto& yaw = j.at("yaw");
  if (pos.size() != kPositionDegree + 1 || yaw.size() != kYawDegree + 1)
    throw std::runtime_error("segment: wrong number of control points");
  for (int i = 0; i <= kPositionDegree; ++i)
    for (int a = 0; a < 3; ++a) cp(a, i) = pos[i].at(a).get<double>();
  for (int i = 0; i <= kYawDegree; ++i) cy(0, i) = yaw[i].get<double>();
  return {BezierCurve3D(cp), BezierCurve1D(cy), j.at("duration").get<double>()};
}

nlohmann::json TrajectoryTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, n] : nodes_) {
    nlohmann::json jn = {{"id", id},
                         {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
                         {"children", n.children},
                         {"segment", segment_to_json(n.segment)},
                         {"gain", n.gain},
                         {"cost", n.cost},
                         {"active", n.active},
                         {"consumed", n.consumed},
                         {"map_revision", n.map_revision}};
    nodes.push_back(std::move(jn));
  }
  return {{"root", root_}, {"next_id", next_id_}, {"nodes", nodes}};
}

TrajectoryTree TrajectoryTree::from_json(const nlohmann::json& j) {
  TrajectoryTree t;
  t.root_ = j.at("root").get<NodeId>();
  t.next_id_ = j.at("next_id").get<NodeId>();
  for (const auto& jn : j.at("nodes")) {
    TrajectoryNode n;
    n.id = jn.at("id").get<NodeId>();
    if (!jn.at("parent").is_null()) n.parent = jn.at("parent").get<NodeId>();
    n.children = jn.at("children").get<std::vector<NodeId>>();
    n.segment = segment_from_json(jn.at("segment"));
    n.gain = jn.at("gain").get<double>();
    n.cost = jn.at("cost").get<double>();
    n.active = jn.at("active").get<bool>();
    n.consumed = jn.at("consumed").get<bool>();
    n.map_revision = jn.at("map_revision").get<std::uint64_t>();
    t.nodes_.emplace(n.id, std::move(n));
  }
  if (!t.contains(t.root_)) throw std::runtime_error("tree: root id not present");
  return t;
}

double continuity_error(const BezierSegment& prev, const BezierSegment& next) {
  const ContinuityPrefix p = continuity_prefix(prev, next.duration);
  double err = 0.0;
  err = std::max(err, (next.pos.point(0) - p.r0).cwiseAbs().maxCoeff());
  err = std::max(err, (next.pos.point(1) - p.r1).cwiseAbs().maxCoeff());
  err = std::max(err, (next.pos.point(2) - p.r2).cwiseAbs().maxCoeff());
  err = std::max(err, std::abs(next.yaw.point(0)(0) - p.yaw0));
  err = std::max(err, std::abs(next.yaw.point(1)(0) - p.yaw1));
  return err;
}

std::vector<std::string> check_tree_invariants(const TrajectoryTree& tree, double tol) {
  std::vector<std::string> errors;
  auto fail = [&](NodeId id, const std::string& what) {
    std::ostringstream os;
    os << "node " << id << ": " << what;
    errors.push_back(os.str());
  };
  if (!tree.contains(tree.root())) {
    errors.push_back("root missing");
    return errors;
  }
  const auto& root = tree.node(tree.root());
  if (!root.active) fail(root.id, "root is inactive");
  if (root.parent) fail(root.id, "root has a parent");

  std::size_t active_roots = 0;
  for (const auto& [id, n] : tree.nodes()) {
    if (n.active && !n.parent) ++active_roots;
    if (n.gain < 0.0) fail(id, "negative gain");
    if (!(n.cost > 0.0)) fail(id, "non-positive cost");
    if (n.parent) {
      if (!tree.contains(*n.parent)) {
        fail(id, "parent missing");
        continue;
      }
      const auto& p = tree.node(*n.parent);
      if (std::find(p.children.begin(), p.children.end(), id) == p.children.end()) fail(id, "not listed by parent");
      if (n.active && !p.active) fail(id, "active node under inactive parent");
      if (n.active && continuity_error(p.segment, n.segment) > tol) fail(id, "continuity violated");
    }
    for (const NodeId c : n.children)
      if (!tree.contains(c) || tree.node(c).parent != std::optional<NodeId>(id)) fail(id, "child link broken");
    std::optional<NodeId> cur = n.parent;
    std::size_t steps = 0;
    while (cur && tree.contains(*cur)) {
      if (++steps > tree.size()) {
        fail(id, "cycle");
        break;
      }
      cur = tree.node(*cur).parent;
    }
  }
  if (active_roots != 1) errors.push_back("expected exactly one active root, found " + std::to_string(active_roots));
  return errors;
}

// --- construction ------------------------------------------------------------------------------

std::optional<Eigen::Vector3d> sample_viewpoint(const TrajectoryNode& best, const OccupancyGrid& map,
                                                const PlannerParams& params, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Eigen::Vector3d c = best.segment.end();
  for (int attempt = 0; attempt < params.max_sampling_attempts; ++attempt) {
    Eigen::Vector3d u;
    do {
      u = {unit(rng), unit(rng), unit(rng)};
    } while (u.squaredNorm() > 1.0);
    const Eigen::Vector3d p = c + params.sampling_radius * u;
    if (sample_is_valid(map, p, params.d_safe)) return p;
  }
  return std::nullopt;
}

bool segment_is_feasible(const BezierSegment& segment, const OccupancyGrid& map, const PlannerParams& params) {
  auto dist = [&](const Eigen::Vector3d& p) { return map.obstacle_distance(p); };
  return check_dynamic_bounds(segment, params.max_vel, params.max_acc) &&
         is_collision_free(segment.pos, dist, params.d_safe);
}

std::optional<TrajectoryNode> build_node(const TrajectoryNode& parent, const Eigen::Vector3d& r5,
                                         const OccupancyGrid& map, const PlannerParams& params,
                                         const CostWeights& weights, const GainQuery& gain_query) {
  const double parent_yaw = parent.segment.end_yaw();
  const double yaw3 = parent_yaw + wrap_angle(gain_query.best_yaw(r5) - parent_yaw);
  auto dist = [&](const Eigen::Vector3d& p) { return map.obstacle_distance(p); };

  std::optional<BezierSegment> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const double d : params.durations()) {
    const ContinuityPrefix prefix = continuity_prefix(parent.segment, d);
    Eigen::Matrix<double, 3, Eigen::Dynamic> partial(3, 3);
    partial << prefix.r0, prefix.r1, prefix.r2;
    if (!is_collision_free(BezierCurve3D(partial), dist, params.d_safe)) continue;
    const FreePoints free = solve_free_points(prefix, r5, yaw3, d, weights);
    BezierSegment seg = assemble_segment(prefix, free, r5, yaw3, d);
    if (!segment_is_feasible(seg, map, params)) continue;
    const double c = segment_cost(seg, weights);
    if (c < best_cost) {
      best_cost = c;
      best = std::move(seg);
    }
  }
  if (!best) return std::nullopt;

  TrajectoryNode node;
  node.parent = parent.id;
  node.segment = std::move(*best);
  node.gain = std::max(0.0, gain_query.gain(r5));
  node.cost = best_cost;
  node.map_revision = map.revision();
  return node;
}

namespace {

struct PathSums {
  double gain = 0.0, cost = 0.0;
};

// Memoised root-path sums over the active part of the tree.
class UtilityTable {
 public:
  explicit UtilityTable(const TrajectoryTree& tree) : tree_(tree) {}

  PathSums sums(NodeId id) {
    if (id == tree_.root()) return {};
    if (const auto it = memo_.find(id); it != memo_.end()) return it->second;
    const auto& n = tree_.node(id);
    PathSums s = sums(*n.parent);
    s.gain += n.gain;
    s.cost += n.cost;
    memo_.emplace(id, s);
    return s;
  }
  double utility(NodeId id) {
    const PathSums s = sums(id);
    return s.cost > 0.0 ? s.gain / s.cost : 0.0;
  }

 private:
  const TrajectoryTree& tree_;
  std::map<NodeId, PathSums> memo_;
};

}  // namespace

double utility(const TrajectoryTree& tree, NodeId id) {
  tree.path_from_root(id);
  return UtilityTable(tree).utility(id);
}

std::optional<NodeId> best_node(const TrajectoryTree& tree) {
  UtilityTable table(tree);
  std::optional<NodeId> best;
  double best_u = -std::numeric_limits<double>::infinity();
  for (const auto& [id, n] : tree.nodes()) {
    if (!n.active || id == tree.root()) continue;
    const double u = table.utility(id);
    if (u > best_u) {
      best_u = u;
      best = id;
    }
  }
  return best;
}

ExpandResult expand_tree(TrajectoryTree& tree, const OccupancyGrid& map, const PlannerParams& params,
                         const CostWeights& weights, const GainQuery& gain_query, std::mt19937_64& rng,
                         const ExpandBudget& budget) {
  ExpandResult res;
  const std::size_t n_max = static_cast<std::size_t>(params.max_sampled_nodes);
  std::optional<NodeId> best = best_node(tree);
  double best_utility = best ? utility(tree, *best) : 0.0;
  std::size_t last_improvement = 0;

  std::optional<NodeId> closest;
  double closest_d = std::numeric_limits<double>::infinity();
  if (budget.goal) {
    for (const NodeId id : tree.active_ids()) {
      const double d = (tree.node(id).segment.end() - *budget.goal).norm();
      if (d < closest_d) {
        closest_d = d;
        closest = id;
      }
    }
  }
  int failures = 0;

  while (res.attempts < budget.max_attempts) {
    if (budget.deadline && std::chrono::steady_clock::now() >= *budget.deadline) break;
    ++res.attempts;

    NodeId centre = budget.goal ? *closest : best.value_or(tree.root());
    if (failures >= params.fallback_after_failures) {
      const auto ids = tree.active_ids();
      centre = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
    }
    const auto& from = tree.node(centre);
    const auto r5 = sample_viewpoint(from, map, params, rng);
    if (!r5) {
      ++failures;
      continue;
    }
    auto node = build_node(from, *r5, map, params, weights, gain_query);
    if (!node) {
      ++failures;
      continue;
    }
    failures = 0;
    const double best_gain = best ? tree.node(*best).gain : 0.0;
    if (!budget.goal && node->gain > best_gain) last_improvement = res.attempts;
    const NodeId id = tree.insert(std::move(*node));
    ++res.inserted;
    if (budget.goal) {
      const double d = (tree.node(id).segment.end() - *budget.goal).norm();
      if (d < closest_d) {
        closest_d = d;
        closest = id;
        last_improvement = res.attempts;
      }
    }
    const double u = utility(tree, id);
    if (!best || u > best_utility) {
      best = id;
      best_utility = u;
    }
    if (res.inserted >= n_max && res.attempts - last_improvement >= n_max) break;
  }
  res.fallback = res.inserted == 0;
  return res;
}

std::optional<BezierSegment> plan_safe_segment(const BezierSegment& prev, const OccupancyGrid& map,
                                               const PlannerParams& params, const CostWeights& weights) {
  auto ds = params.durations();
  for (auto it = ds.rbegin(); it != ds.rend(); ++it) {
    BezierSegment safe = solve_safe_segment(prev, *it, weights);
    if (segment_is_feasible(safe, map, params)) return safe;
  }
  return std::nullopt;
}

namespace {

// Commits the first node of the highest-scoring active branch that passes the feasibility checks.
template <typename Score>
std::optional<Commit> commit_best(TrajectoryTree& tree, const OccupancyGrid& map, const PlannerParams& params,
                                  const CostWeights& weights, Score&& score) {
  while (true) {
    std::optional<NodeId> best;
    double best_s = -std::numeric_limits<double>::infinity();
    for (const auto& [id, n] : tree.nodes()) {
      if (!n.active || id == tree.root()) continue;
      const double s = score(id);
      if (s > best_s) {
        best_s = s;
        best = id;
      }
    }
    if (!best) return std::nullopt;
    const NodeId first = tree.path_from_root(*best).at(1);
    const auto& node = tree.node(first);
    std::optional<BezierSegment> safe;
    if (segment_is_feasible(node.segment, map, params)) safe = plan_safe_segment(node.segment, map, params, weights);
    if (!safe) {
      tree.deactivate_subtree(first);
      continue;
    }
    tree.advance_root(first);
    return Commit{tree.node(first), std::move(*safe)};
  }
}

}  // namespace

std::optional<Commit> commit_next(TrajectoryTree& tree, const OccupancyGrid& map, const PlannerParams& params,
                                  const CostWeights& weights) {
  UtilityTable table(tree);
  return commit_best(tree, map, params, weights, [&](NodeId id) { return table.utility(id); });
}

std::optional<Commit> commit_toward(TrajectoryTree& tree, const Eigen::Vector3d& goal, const OccupancyGrid& map,
                                    const PlannerParams& params, const CostWeights& weights) {
  return commit_best(tree, map, params, weights,
                     [&](NodeId id) { return -(tree.node(id).segment.end() - goal).norm(); });
}

std::size_t rewire_safe(TrajectoryTree& tree, const BezierSegment& safe, const OccupancyGrid& map,
                        const PlannerParams& params, const CostWeights& weights, const GainQuery& gain_query) {
  TrajectoryNode node;
  node.parent = tree.root();
  node.segment = safe;
  node.cost = segment_cost(safe, weights);
  node.map_revision = map.revision();
  const NodeId id = tree.insert(std::move(node));
  tree.advance_root(id);

  const Eigen::Vector3d end = safe.end();
  std::vector<NodeId> candidates;
  for (const auto& [cid, n] : tree.nodes()) {
    if (cid == id || n.consumed || !n.parent) continue;
    if ((n.segment.end() - end).norm() <= params.sampling_radius) candidates.push_back(cid);
  }
  std::size_t count = 0;
  for (const NodeId cid : candidates) {
    auto rebuilt = build_node(tree.node(id), tree.node(cid).segment.end(), map, params, weights, gain_query);
    if (!rebuilt) continue;
    tree.insert(std::move(*rebuilt));
    tree.node(cid).consumed = true;
    ++count;
  }
  return count;
}

std::size_t reevaluate_gains(TrajectoryTree& tree, const GainQuery& gain_query) {
  std::size_t count = 0;
  for (const NodeId id : tree.active_ids()) {
    if (id == tree.root()) continue;
    auto& n = tree.node(id);
    n.gain = std::max(0.0, gain_query.gain(n.segment.end()));
    ++count;
  }
  return count;
}

}  // namespace bzx
