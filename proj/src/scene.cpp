#include "bzx/world.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bzx {

namespace {

// Slab test; returns (t_near, t_far) or nullopt when the line misses the box.
std::optional<std::pair<double, double>> slab(const Box& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d(a)) < 1e-15) {
      if (o(a) < b.min(a) || o(a) > b.max(a)) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / d(a);
    double ta = (b.min(a) - o(a)) * inv;
    double tb = (b.max(a) - o(a)) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

Eigen::Vector3d read_vec3(const YAML::Node& n, const std::string& what) {
  if (!n || !n.IsSequence() || n.size() != 3) throw std::runtime_error("scene: '" + what + "' must be a 3-vector");
  return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
}

void reject_unknown(const YAML::Node& n, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw std::runtime_error("scene: unknown key '" + key + "' in " + where);
  }
}

}  // namespace

std::optional<double> Scene::first_hit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_max) const {
  std::optional<double> best;
  for (const auto& b : obstacles) {
    const auto s = slab(b, origin, dir);
    if (!s || s->second < 0.0) continue;
    const double t = std::max(0.0, s->first);
    if (t <= t_max && (!best || t < *best)) best = t;
  }
  return best;
}

double Scene::bounds_exit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
  const auto s = slab(bounds, origin, dir);
  return s ? std::max(0.0, s->second) : 0.0;
}

bool Scene::in_obstacle(const Eigen::Vector3d& p) const {
  for (const auto& b : obstacles)
    if (b.contains(p)) return true;
  return false;
}

double Scene::clearance(const Eigen::Vector3d& p) const {
  if (!bounds.contains(p)) return 0.0;
  double c = std::min((p - bounds.min).minCoeff(), (bounds.max - p).minCoeff());
  for (const auto& b : obstacles) c = std::min(c, b.distance(p));
  return c;
}

void Scene::validate() {
  if (bounds.empty()) throw std::runtime_error("scene: bounds are empty");
  std::vector<Box> clipped;
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    Box b = obstacles[i];
    if (!bounds.contains(b.min) || !bounds.contains(b.max)) {
      warnings.push_back("obstacle " + std::to_string(i) + " extends outside bounds; clipped");
      b.min = b.min.cwiseMax(bounds.min);
      b.max = b.max.cwiseMin(bounds.max);
    }
    if (b.empty()) {
      warnings.push_back("obstacle " + std::to_string(i) + " is empty after clipping; dropped");
      continue;
    }
    clipped.push_back(b);
  }
  obstacles = std::move(clipped);

  // Free space must exist somewhere: probe a lattice of cell centres.
  constexpr int kProbe = 24;
  const Eigen::Vector3d step = (bounds.max - bounds.min) / kProbe;
  for (int i = 0; i < kProbe; ++i)
    for (int j = 0; j < kProbe; ++j)
      for (int k = 0; k < kProbe; ++k) {
        const Eigen::Vector3d p = bounds.min + step.cwiseProduct(Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5));
        if (!in_obstacle(p)) return;
      }
  throw std::runtime_error("scene: obstacles leave no free space inside bounds");
}

Scene parse_scene(const std::string& text) {
  const YAML::Node root = YAML::Load(text);
  if (!root.IsMap()) throw std::runtime_error("scene: top level must be a mapping");
  reject_unknown(root, {"version", "name", "bounds", "obstacles"}, "scene");
  Scene s;
  s.version = root["version"] ? root["version"].as<int>() : 1;
  if (s.version != 1) throw std::runtime_error("scene: unsupported version " + std::to_string(s.version));
  const YAML::Node b = root["bounds"];
  if (!b) throw std::runtime_error("scene: missing 'bounds'");
  reject_unknown(b, {"min", "max"}, "bounds");
  s.bounds = {read_vec3(b["min"], "bounds.min"), read_vec3(b["max"], "bounds.max")};
  if (const YAML::Node obs = root["obstacles"]) {
    for (const auto& o : obs) {
      reject_unknown(o, {"min", "max", "center", "size"}, "obstacle");
      Box box;
      if (o["center"]) {
        const Eigen::Vector3d c = read_vec3(o["center"], "obstacle.center");
        const Eigen::Vector3d sz = read_vec3(o["size"], "obstacle.size");
        box = {c - 0.5 * sz, c + 0.5 * sz};
      } else {
        box = {read_vec3(o["min"], "obstacle.min"), read_vec3(o["max"], "obstacle.max")};
      }
      s.obstacles.push_back(box);
    }
  }
  s.validate();
  return s;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scene(ss.str());
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("scene " + path.string() + ": " + e.what());
  }
}

std::string format_scene(const Scene& scene) {
  YAML::Emitter out;
  auto vec = [&](const Eigen::Vector3d& v) {
    out << YAML::Flow << YAML::BeginSeq << v.x() << v.y() << v.z() << YAML::EndSeq;
  };
  out << YAML::BeginMap << YAML::Key << "version" << YAML::Value << scene.version;
  out << YAML::Key << "bounds" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "min" << YAML::Value;
  vec(scene.bounds.min);
  out << YAML::Key << "max" << YAML::Value;
  vec(scene.bounds.max);
  out << YAML::EndMap << YAML::Key << "obstacles" << YAML::Value << YAML::BeginSeq;
  for (const auto& b : scene.obstacles) {
    out << YAML::BeginMap << YAML::Key << "min" << YAML::Value;
    vec(b.min);
    out << YAML::Key << "max" << YAML::Value;
    vec(b.max);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return out.c_str();
}

void CameraModel::validate() const {
  if (!(min_range > 0.0 && min_range < max_range)) throw std::invalid_argument("camera: need 0 < min_range < max_range");
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0)) throw std::invalid_argument("camera: horizontal FoV outside (0, 180)");
  if (!(vertical_fov_deg > 0.0 && vertical_fov_deg < 180.0)) throw std::invalid_argument("camera: vertical FoV outside (0, 180)");
  if (!(rays_per_degree > 0.0)) throw std::invalid_argument("camera: ray density must be positive");
}

void integrate_depth_scan(OccupancyGrid& map, const Scene& scene, const Pose& pose, const CameraModel& camera) {
  if (!scene.bounds.contains(pose.position)) throw std::out_of_range("integrate_depth_scan: pose outside scene bounds");
  constexpr double kDeg = M_PI / 180.0;
  const int n_az = std::max(1, static_cast<int>(std::lround(camera.horizontal_fov_deg * camera.rays_per_degree)));
  const int n_el = std::max(1, static_cast<int>(std::lround(camera.vertical_fov_deg * camera.rays_per_degree)));
  const double res = map.resolution();
  const Eigen::Vector3d& o = pose.position;
  const Eigen::Vector3d g0 = (o - map.origin()) / res;
  std::vector<Eigen::Vector3i> hits;

  for (int ie = 0; ie < n_el; ++ie) {
    const double el = (-0.5 * camera.vertical_fov_deg + (ie + 0.5) * camera.vertical_fov_deg / n_el) * kDeg;
    for (int ia = 0; ia < n_az; ++ia) {
      const double az =
          pose.yaw + (-0.5 * camera.horizontal_fov_deg + (ia + 0.5) * camera.horizontal_fov_deg / n_az) * kDeg;
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));

      const double t_exit = scene.bounds_exit(o, dir);
      const auto t_hit = scene.first_hit(o, dir, camera.max_range);
      const double t_end = std::min({t_hit.value_or(camera.max_range), t_exit, camera.max_range});
      if (t_hit && *t_hit >= camera.min_range && *t_hit <= std::min(camera.max_range, t_exit))
        hits.push_back(map.index_of(o + (*t_hit + 1e-6) * dir));
      if (t_end <= camera.min_range) continue;

      // Voxel traversal over [min_range, t_end).
      const double t_start = camera.min_range;
      const Eigen::Vector3d gs = g0 + (t_start / res) * dir;
      Eigen::Vector3i idx = gs.array().floor().cast<int>();
      Eigen::Vector3i step;
      Eigen::Vector3d t_max, t_delta;
      for (int a = 0; a < 3; ++a) {
        if (dir(a) > 0) {
          step(a) = 1;
          t_delta(a) = res / dir(a);
          t_max(a) = t_start + (idx(a) + 1 - gs(a)) * t_delta(a);
        } else if (dir(a) < 0) {
          step(a) = -1;
          t_delta(a) = -res / dir(a);
          t_max(a) = t_start + (gs(a) - idx(a)) * t_delta(a);
        } else {
          step(a) = 0;
          t_delta(a) = t_max(a) = std::numeric_limits<double>::infinity();
        }
      }
      double t_enter = t_start;
      while (t_enter < t_end - 1e-6) {
        if (!map.in_bounds(idx)) break;
        if (map.at(idx) == VoxelState::Unknown) map.set(idx, VoxelState::Free);
        int a = 0;
        if (t_max(1) < t_max(a)) a = 1;
        if (t_max(2) < t_max(a)) a = 2;
        t_enter = t_max(a);
        t_max(a) += t_delta(a);
        idx(a) += step(a);
      }
    }
  }
  for (const auto& h : hits) map.set(h, VoxelState::Occupied);
}

void mark_body_free(OccupancyGrid& map, const Scene& scene, const Eigen::Vector3d& p, double radius) {
  const double res = map.resolution();
  const Eigen::Vector3i lo = map.index_of(p - Eigen::Vector3d::Constant(radius));
  const Eigen::Vector3i hi = map.index_of(p + Eigen::Vector3d::Constant(radius));
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const Eigen::Vector3i i(x, y, z);
        if (!map.in_bounds(i) || map.at(i) != VoxelState::Unknown) continue;
        const Eigen::Vector3d c = map.center_of(i);
        if ((c - p).norm() > radius) continue;
        const Box cell{c - Eigen::Vector3d::Constant(0.5 * res), c + Eigen::Vector3d::Constant(0.5 * res)};
        bool blocked = false;
        for (const auto& b : scene.obstacles) {
          if ((cell.min.array() < b.max.array()).all() && (cell.max.array() > b.min.array()).all()) {
            blocked = true;
            break;
          }
        }
        if (!blocked) map.set(i, VoxelState::Free);
      }
}

}  // namespace bzx
