#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace bzx {

struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool empty() const { return !((max.array() > min.array()).all()); }
  double volume() const { return empty() ? 0.0 : (max - min).prod(); }
  /// Euclidean distance from p to the box (0 inside).
  double distance(const Eigen::Vector3d& p) const {
    return (min - p).cwiseMax(p - max).cwiseMax(0.0).norm();
  }
};

/// Ground truth for the simulator: an exploration volume and box obstacles.
struct Scene {
  int version = 1;
  Box bounds;
  std::vector<Box> obstacles;
  std::vector<std::string> warnings;

  /// Throws on empty bounds or when no free space remains; clips obstacles to bounds.
  void validate();

  /// Parameter of the first obstacle surface hit along origin + t dir, t in (0, t_max].
  std::optional<double> first_hit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_max) const;
  /// Parameter where the ray leaves the bounds.
  double bounds_exit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  bool in_obstacle(const Eigen::Vector3d& p) const;
  /// Distance to the nearest obstacle or to the bounds faces.
  double clearance(const Eigen::Vector3d& p) const;
};

Scene load_scene(const std::filesystem::path& path);
Scene parse_scene(const std::string& text);
std::string format_scene(const Scene& scene);

struct CameraModel {
  double horizontal_fov_deg = 115.0;
  double vertical_fov_deg = 60.0;
  double min_range = 0.3;
  double max_range = 5.0;
  double rays_per_degree = 2.0;

  void validate() const;
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
};

enum class VoxelState : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

class DistanceIndex;

/// Dense voxel map over an axis-aligned region. Points outside the region read as Occupied.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Eigen::Vector3d& origin, double resolution, const Eigen::Vector3i& dims,
                bool unknown_as_obstacle = true);
  /// Grid whose cells tile `bounds` (rounded up to whole voxels).
  static OccupancyGrid covering(const Box& bounds, double resolution, bool unknown_as_obstacle = true);

  OccupancyGrid(const OccupancyGrid& other);
  OccupancyGrid& operator=(const OccupancyGrid& other);
  OccupancyGrid(OccupancyGrid&&) noexcept;
  OccupancyGrid& operator=(OccupancyGrid&&) noexcept;
  ~OccupancyGrid();

  const Eigen::Vector3d& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Eigen::Vector3i& dims() const { return dims_; }
  std::size_t voxel_count() const { return states_.size(); }
  bool unknown_as_obstacle() const { return unknown_as_obstacle_; }
  /// When set (default), the region outside the grid counts as obstacle for distance queries.
  bool boundary_as_obstacle() const { return boundary_as_obstacle_; }
  void set_boundary_as_obstacle(bool on);
  Box extent() const;

  bool in_bounds(const Eigen::Vector3i& idx) const {
    return (idx.array() >= 0).all() && (idx.array() < dims_.array()).all();
  }
  Eigen::Vector3i index_of(const Eigen::Vector3d& p) const;
  Eigen::Vector3d center_of(const Eigen::Vector3i& idx) const;
  std::size_t linear(const Eigen::Vector3i& idx) const {
    return (static_cast<std::size_t>(idx.z()) * dims_.y() + idx.y()) * dims_.x() + idx.x();
  }

  VoxelState at(const Eigen::Vector3i& idx) const { return in_bounds(idx) ? states_[linear(idx)] : VoxelState::Occupied; }
  VoxelState at(const Eigen::Vector3d& p) const { return at(index_of(p)); }
  /// Transitions back to Unknown are rejected.
  void set(const Eigen::Vector3i& idx, VoxelState s);
  bool is_obstacle(VoxelState s) const {
    return s == VoxelState::Occupied || (unknown_as_obstacle_ && s == VoxelState::Unknown);
  }

  std::size_t known_count() const { return known_count_; }
  /// Incremented on every state change.
  std::uint64_t revision() const { return revision_; }
  const std::vector<VoxelState>& states() const { return states_; }

  /// Exact distance to the nearest obstacle voxel centre minus half the voxel diagonal.
  double obstacle_distance(const Eigen::Vector3d& p) const;

 private:
  std::shared_ptr<const DistanceIndex> distance_index() const;

  Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
  double resolution_ = 0.2;
  Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
  bool unknown_as_obstacle_ = true;
  bool boundary_as_obstacle_ = true;
  std::vector<VoxelState> states_;
  std::size_t known_count_ = 0;
  std::uint64_t revision_ = 0;

  mutable std::mutex index_mutex_;
  mutable std::shared_ptr<const DistanceIndex> index_;
};

VoxelState voxel_state(const OccupancyGrid& map, const Eigen::Vector3d& p);
double nearest_obstacle_distance(const OccupancyGrid& map, const Eigen::Vector3d& p);
double explored_volume(const OccupancyGrid& map);
bool sample_is_valid(const OccupancyGrid& map, const Eigen::Vector3d& p, double clearance);

/// Simulated depth frame: free space along each ray from min range to the first hit (or max
/// range / bounds exit), hit voxel marked Occupied when inside [min range, max range].
void integrate_depth_scan(OccupancyGrid& map, const Scene& scene, const Pose& pose, const CameraModel& camera);

/// Unknown voxels whose centre lies within `radius` of `p` and outside every obstacle become Free.
/// Models the volume swept by the vehicle body.
void mark_body_free(OccupancyGrid& map, const Scene& scene, const Eigen::Vector3d& p, double radius);

/// Text header (origin, resolution, dims) next to a raw byte array of voxel states.
void dump_map(const OccupancyGrid& map, const std::filesystem::path& header_path);
OccupancyGrid load_map_dump(const std::filesystem::path& header_path);

}  // namespace bzx
