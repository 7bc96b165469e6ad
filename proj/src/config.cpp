#include "bzx/sim.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bzx {

namespace {

using Setter = std::function<void(ExplorationConfig&, const YAML::Node&)>;

template <typename T>
Setter field(T ExplorationConfig::*member) {
  return [member](ExplorationConfig& c, const YAML::Node& n) { c.*member = n.as<T>(); };
}

template <typename S, typename T>
Setter nested(S ExplorationConfig::*outer, T S::*inner) {
  return [outer, inner](ExplorationConfig& c, const YAML::Node& n) { (c.*outer).*inner = n.as<T>(); };
}

std::vector<double> list(const YAML::Node& n, std::size_t size, const std::string& key) {
  if (!n.IsSequence() || n.size() != size)
    throw std::runtime_error("config: '" + key + "' must be a list of " + std::to_string(size) + " numbers");
  std::vector<double> v;
  for (const auto& e : n) v.push_back(e.as<double>());
  return v;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      // Planner, camera and cost parameters.
      {"max_vel", nested(&ExplorationConfig::planner, &PlannerParams::max_vel)},
      {"max_acc", nested(&ExplorationConfig::planner, &PlannerParams::max_acc)},
      {"sampled_nodes", nested(&ExplorationConfig::planner, &PlannerParams::max_sampled_nodes)},
      {"max_length", nested(&ExplorationConfig::planner, &PlannerParams::sampling_radius)},
      {"min_range", nested(&ExplorationConfig::camera, &CameraModel::min_range)},
      {"max_range", nested(&ExplorationConfig::camera, &CameraModel::max_range)},
      {"camera_fov",
       [](ExplorationConfig& c, const YAML::Node& n) {
         const auto v = list(n, 2, "camera_fov");
         c.camera.horizontal_fov_deg = v[0];
         c.camera.vertical_fov_deg = v[1];
       }},
      {"map_res", field(&ExplorationConfig::map_res)},
      {"mu",
       [](ExplorationConfig& c, const YAML::Node& n) {
         const auto v = list(n, 3, "mu");
         c.weights = {v[0], v[1], v[2]};
       }},
      {"time_res", nested(&ExplorationConfig::planner, &PlannerParams::time_res)},
      {"min_time", nested(&ExplorationConfig::planner, &PlannerParams::min_time)},
      {"max_time", nested(&ExplorationConfig::planner, &PlannerParams::max_time)},
      // Everything else.
      {"d_safe", nested(&ExplorationConfig::planner, &PlannerParams::d_safe)},
      {"max_sampling_attempts", nested(&ExplorationConfig::planner, &PlannerParams::max_sampling_attempts)},
      {"fallback_after_failures", nested(&ExplorationConfig::planner, &PlannerParams::fallback_after_failures)},
      {"rays_per_degree", nested(&ExplorationConfig::camera, &CameraModel::rays_per_degree)},
      {"gain_azimuth_bin", nested(&ExplorationConfig::rays, &GainRayConfig::azimuth_bin_deg)},
      {"gain_elevation_step", nested(&ExplorationConfig::rays, &GainRayConfig::elevation_step_deg)},
      {"gain_radial_step", nested(&ExplorationConfig::rays, &GainRayConfig::radial_step_fraction)},
      {"gp_noise", nested(&ExplorationConfig::gp, &GpSettings::noise)},
      {"gp_min_separation", nested(&ExplorationConfig::gp, &GpSettings::min_separation)},
      {"gp_capacity", nested(&ExplorationConfig::gp, &GpSettings::capacity)},
      {"gp_reevaluation_budget", nested(&ExplorationConfig::gp, &GpSettings::reevaluation_budget)},
      {"gp_evaluation_budget", nested(&ExplorationConfig::gp, &GpSettings::evaluation_budget)},
      {"gp_variance_threshold", nested(&ExplorationConfig::gp, &GpSettings::variance_threshold)},
      {"seed", field(&ExplorationConfig::seed)},
      {"mode",
       [](ExplorationConfig& c, const YAML::Node& n) {
         const auto m = n.as<std::string>();
         if (m == "deterministic") c.mode = RunMode::Deterministic;
         else if (m == "threaded") c.mode = RunMode::Threaded;
         else throw std::runtime_error("config: mode must be 'deterministic' or 'threaded', got '" + m + "'");
       }},
      {"sensor_rate", field(&ExplorationConfig::sensor_rate)},
      {"body_radius", field(&ExplorationConfig::body_radius)},
      {"start",
       [](ExplorationConfig& c, const YAML::Node& n) {
         const auto v = list(n, 3, "start");
         c.start = {v[0], v[1], v[2]};
       }},
      {"start_yaw", field(&ExplorationConfig::start_yaw)},
      {"initial_scans", field(&ExplorationConfig::initial_scans)},
      {"g_zero_fraction", field(&ExplorationConfig::g_zero_fraction)},
      {"termination_iterations", field(&ExplorationConfig::termination_iterations)},
      {"relocation_gain_fraction", field(&ExplorationConfig::relocation_gain_fraction)},
      {"relocation_patience", field(&ExplorationConfig::relocation_patience)},
      {"max_sim_time", field(&ExplorationConfig::max_sim_time)},
      {"max_wall_time", field(&ExplorationConfig::max_wall_time)},
      {"attempt_cost", field(&ExplorationConfig::attempt_cost)},
      {"threaded_time_scale", field(&ExplorationConfig::threaded_time_scale)},
      {"max_tree_nodes", field(&ExplorationConfig::max_tree_nodes)},
  };
  return table;
}

}  // namespace

void ExplorationConfig::validate() const {
  planner.validate();
  camera.validate();
  weights.validate();
  if (!(map_res > 0.0)) throw std::invalid_argument("config: map_res must be positive");
  if (!(sensor_rate > 0.0)) throw std::invalid_argument("config: sensor_rate must be positive");
  if (!(body_radius >= 0.0)) throw std::invalid_argument("config: body_radius must be non-negative");
  if (initial_scans < 0) throw std::invalid_argument("config: initial_scans must be non-negative");
  if (!(g_zero_fraction >= 0.0 && g_zero_fraction < 1.0)) throw std::invalid_argument("config: g_zero_fraction outside [0, 1)");
  if (termination_iterations <= 0) throw std::invalid_argument("config: termination_iterations must be positive");
  if (!(relocation_gain_fraction >= 0.0)) throw std::invalid_argument("config: relocation_gain_fraction must be non-negative");
  if (relocation_patience <= 0) throw std::invalid_argument("config: relocation_patience must be positive");
  if (!(max_sim_time > 0.0 && max_wall_time > 0.0)) throw std::invalid_argument("config: time caps must be positive");
  if (!(attempt_cost > 0.0)) throw std::invalid_argument("config: attempt_cost must be positive");
  if (!(threaded_time_scale > 0.0)) throw std::invalid_argument("config: threaded_time_scale must be positive");
  if (!(gp.noise > 0.0)) throw std::invalid_argument("config: gp_noise must be positive");
  if (!(gp.min_separation >= 0.0)) throw std::invalid_argument("config: gp_min_separation must be non-negative");
  if (gp.capacity == 0) throw std::invalid_argument("config: gp_capacity must be positive");
  if (!(rays.azimuth_bin_deg > 0.0 && rays.elevation_step_deg > 0.0 && rays.radial_step_fraction > 0.0))
    throw std::invalid_argument("config: gain ray spacing must be positive");
  if (max_tree_nodes < 16) throw std::invalid_argument("config: max_tree_nodes too small");
}

ExplorationConfig parse_config(const std::string& text) {
  const YAML::Node root = YAML::Load(text);
  ExplorationConfig c;
  if (root.IsNull()) {
    c.source = text;
    c.validate();
    return c;
  }
  if (!root.IsMap()) throw std::runtime_error("config: top level must be a mapping");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto it = setters().find(key);
    if (it == setters().end()) throw std::runtime_error("config: unknown key '" + key + "'");
    try {
      it->second(c, kv.second);
    } catch (const YAML::Exception& e) {
      throw std::runtime_error("config: bad value for '" + key + "': " + e.what());
    }
  }
  c.source = text;
  c.validate();
  return c;
}

ExplorationConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
}

std::string format_config(const ExplorationConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  auto seq = [&](std::initializer_list<double> v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const double x : v) out << x;
    out << YAML::EndSeq;
  };
  out << YAML::BeginMap;
  out << YAML::Key << "max_vel" << YAML::Value << c.planner.max_vel;
  out << YAML::Key << "max_acc" << YAML::Value << c.planner.max_acc;
  out << YAML::Key << "sampled_nodes" << YAML::Value << c.planner.max_sampled_nodes;
  out << YAML::Key << "max_length" << YAML::Value << c.planner.sampling_radius;
  out << YAML::Key << "min_range" << YAML::Value << c.camera.min_range;
  out << YAML::Key << "max_range" << YAML::Value << c.camera.max_range;
  out << YAML::Key << "camera_fov" << YAML::Value;
  seq({c.camera.horizontal_fov_deg, c.camera.vertical_fov_deg});
  out << YAML::Key << "map_res" << YAML::Value << c.map_res;
  out << YAML::Key << "mu" << YAML::Value;
  seq({c.weights.duration, c.weights.position, c.weights.yaw});
  out << YAML::Key << "time_res" << YAML::Value << c.planner.time_res;
  out << YAML::Key << "min_time" << YAML::Value << c.planner.min_time;
  out << YAML::Key << "max_time" << YAML::Value << c.planner.max_time;
  out << YAML::Key << "d_safe" << YAML::Value << c.planner.d_safe;
  out << YAML::Key << "max_sampling_attempts" << YAML::Value << c.planner.max_sampling_attempts;
  out << YAML::Key << "fallback_after_failures" << YAML::Value << c.planner.fallback_after_failures;
  out << YAML::Key << "rays_per_degree" << YAML::Value << c.camera.rays_per_degree;
  out << YAML::Key << "gain_azimuth_bin" << YAML::Value << c.rays.azimuth_bin_deg;
  out << YAML::Key << "gain_elevation_step" << YAML::Value << c.rays.elevation_step_deg;
  out << YAML::Key << "gain_radial_step" << YAML::Value << c.rays.radial_step_fraction;
  out << YAML::Key << "gp_noise" << YAML::Value << c.gp.noise;
  out << YAML::Key << "gp_min_separation" << YAML::Value << c.gp.min_separation;
  out << YAML::Key << "gp_capacity" << YAML::Value << c.gp.capacity;
  out << YAML::Key << "gp_reevaluation_budget" << YAML::Value << c.gp.reevaluation_budget;
  out << YAML::Key << "gp_evaluation_budget" << YAML::Value << c.gp.evaluation_budget;
  out << YAML::Key << "gp_variance_threshold" << YAML::Value << c.gp.variance_threshold;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "mode" << YAML::Value << (c.mode == RunMode::Threaded ? "threaded" : "deterministic");
  out << YAML::Key << "sensor_rate" << YAML::Value << c.sensor_rate;
  out << YAML::Key << "body_radius" << YAML::Value << c.body_radius;
  out << YAML::Key << "start" << YAML::Value;
  seq({c.start.x(), c.start.y(), c.start.z()});
  out << YAML::Key << "start_yaw" << YAML::Value << c.start_yaw;
  out << YAML::Key << "initial_scans" << YAML::Value << c.initial_scans;
  out << YAML::Key << "g_zero_fraction" << YAML::Value << c.g_zero_fraction;
  out << YAML::Key << "termination_iterations" << YAML::Value << c.termination_iterations;
  out << YAML::Key << "relocation_gain_fraction" << YAML::Value << c.relocation_gain_fraction;
  out << YAML::Key << "relocation_patience" << YAML::Value << c.relocation_patience;
  out << YAML::Key << "max_sim_time" << YAML::Value << c.max_sim_time;
  out << YAML::Key << "max_wall_time" << YAML::Value << c.max_wall_time;
  out << YAML::Key << "attempt_cost" << YAML::Value << c.attempt_cost;
  out << YAML::Key << "threaded_time_scale" << YAML::Value << c.threaded_time_scale;
  out << YAML::Key << "max_tree_nodes" << YAML::Value << c.max_tree_nodes;
  out << YAML::EndMap;
  return out.c_str();
}

}  // namespace bzx
