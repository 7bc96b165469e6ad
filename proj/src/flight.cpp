#include "bzx/sim.hpp"

#include <cmath>
#include <sstream>

namespace bzx {

FlightResult simulate_flight(const BezierSegment& segment, OccupancyGrid& map, const Scene& scene,
                             const CameraModel& camera, double sensor_rate, double body_radius) {
  FlightResult out;
  const int n_scans = std::max(1, static_cast<int>(std::lround(segment.duration * sensor_rate)));
  for (int k = 1; k <= n_scans; ++k) {
    const double t = segment.duration * k / n_scans;
    const Pose pose{segment.position_at(t), segment.yaw_at(t)};
    if (body_radius > 0.0) mark_body_free(map, scene, pose.position, body_radius);
    integrate_depth_scan(map, scene, pose, camera);
    out.poses.push_back(pose);
    ++out.scans;
  }

  constexpr int kDistanceSamples = 400;
  Eigen::Vector3d prev = segment.position_at(0.0);
  out.min_clearance = scene.clearance(prev);
  for (int i = 1; i <= kDistanceSamples; ++i) {
    const Eigen::Vector3d p = segment.position_at(segment.duration * i / kDistanceSamples);
    out.distance += (p - prev).norm();
    out.min_clearance = std::min(out.min_clearance, scene.clearance(p));
    prev = p;
  }
  return out;
}

double observable_volume(const Scene& scene, const CameraModel& camera, double map_res, double clearance,
                         double spacing) {
  OccupancyGrid map = OccupancyGrid::covering(scene.bounds, map_res);
  const Eigen::Vector3d size = scene.bounds.max - scene.bounds.min;
  const int nx = std::max(1, static_cast<int>(std::floor(size.x() / spacing)));
  const int ny = std::max(1, static_cast<int>(std::floor(size.y() / spacing)));
  for (int iz = 1; iz <= 3; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        const Eigen::Vector3d p = scene.bounds.min + Eigen::Vector3d((ix + 0.5) * size.x() / nx,
                                                                     (iy + 0.5) * size.y() / ny, iz * size.z() / 4.0);
        if (scene.in_obstacle(p) || scene.clearance(p) < clearance) continue;
        for (int k = 0; k < 4; ++k) integrate_depth_scan(map, scene, {p, k * M_PI / 2.0}, camera);
      }
  return explored_volume(map);
}

std::vector<std::string> check_executed_chain(const std::vector<ExecutedSegment>& executed,
                                              const PlannerParams& params, double tol) {
  std::vector<std::string> errors;
  auto fail = [&](std::size_t i, const std::string& what) {
    std::ostringstream os;
    os << "segment " << i << " (" << executed[i].kind << "): " << what;
    errors.push_back(os.str());
  };
  constexpr int kSamples = 256;
  for (std::size_t i = 0; i < executed.size(); ++i) {
    const auto& s = executed[i].segment;
    if (i > 0) {
      const auto& p = executed[i - 1].segment;
      const double d = p.duration;
      double e = continuity_error(p, s);
      e = std::max(e, (p.position_at(d) - s.position_at(0.0)).cwiseAbs().maxCoeff());
      e = std::max(e, (p.velocity_at(d) - s.velocity_at(0.0)).cwiseAbs().maxCoeff());
      e = std::max(e, (p.acceleration_at(d) - s.acceleration_at(0.0)).cwiseAbs().maxCoeff());
      const auto py = derivative(p.yaw, d), sy = derivative(s.yaw, s.duration);
      e = std::max(e, std::abs(p.yaw_at(d) - s.yaw_at(0.0)));
      e = std::max(e, std::abs(eval(py, 1.0)(0) - eval(sy, 0.0)(0)));
      if (e > tol) fail(i, "discontinuous joint, error " + std::to_string(e));
    }
    if (!executed[i].snapshot) continue;
    const auto& map = *executed[i].snapshot;
    if (!segment_is_feasible(s, map, params)) fail(i, "fails the envelope or dynamic-bound test on its snapshot");
    for (int k = 0; k <= kSamples; ++k) {
      const double t = s.duration * k / kSamples;
      if (map.obstacle_distance(s.position_at(t)) <= params.d_safe) {
        fail(i, "sampled clearance below d_safe");
        break;
      }
      if (s.velocity_at(t).norm() > params.max_vel + 1e-9 || s.acceleration_at(t).norm() > params.max_acc + 1e-9) {
        fail(i, "sampled dynamics above the limits");
        break;
      }
    }
  }
  return errors;
}

}  // namespace bzx
