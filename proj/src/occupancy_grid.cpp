#include "bzx/world.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bzx {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

using RtPoint = bg::model::point<double, 3, bg::cs::cartesian>;

/// Centres of obstacle voxels that touch a non-obstacle voxel, including a one-voxel shell of
/// virtual obstacles around the grid. For a query inside a non-obstacle voxel the nearest
/// obstacle centre is always one of these.
class DistanceIndex {
 public:
  DistanceIndex(const OccupancyGrid& map, std::uint64_t revision) : revision_(revision) {
    const Eigen::Vector3i d = map.dims();
    auto obstacle = [&](const Eigen::Vector3i& i) {
      return map.in_bounds(i) ? map.is_obstacle(map.at(i)) : map.boundary_as_obstacle();
    };
    static const Eigen::Vector3i kNeighbours[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::vector<RtPoint> pts;
    for (int z = -1; z <= d.z(); ++z)
      for (int y = -1; y <= d.y(); ++y)
        for (int x = -1; x <= d.x(); ++x) {
          const Eigen::Vector3i i(x, y, z);
          if (!obstacle(i)) continue;
          bool boundary = false;
          for (const auto& n : kNeighbours) {
            const Eigen::Vector3i j = i + n;
            if (map.in_bounds(j) && !map.is_obstacle(map.at(j))) {
              boundary = true;
              break;
            }
          }
          if (!boundary) continue;
          const Eigen::Vector3d c = map.center_of(i);
          pts.emplace_back(c.x(), c.y(), c.z());
        }
    tree_ = bgi::rtree<RtPoint, bgi::quadratic<16>>(pts.begin(), pts.end());
  }

  std::uint64_t revision() const { return revision_; }

  /// Distance to the nearest indexed centre, +inf when empty.
  double nearest(const Eigen::Vector3d& p) const {
    if (tree_.empty()) return std::numeric_limits<double>::infinity();
    const RtPoint q(p.x(), p.y(), p.z());
    for (auto it = tree_.qbegin(bgi::nearest(q, 1)); it != tree_.qend(); ++it) {
      const Eigen::Vector3d c(bg::get<0>(*it), bg::get<1>(*it), bg::get<2>(*it));
      return (p - c).norm();
    }
    return std::numeric_limits<double>::infinity();
  }

 private:
  std::uint64_t revision_;
  bgi::rtree<RtPoint, bgi::quadratic<16>> tree_;
};

OccupancyGrid::OccupancyGrid(const Eigen::Vector3d& origin, double resolution, const Eigen::Vector3i& dims,
                             bool unknown_as_obstacle)
    : origin_(origin), resolution_(resolution), dims_(dims), unknown_as_obstacle_(unknown_as_obstacle) {
  if (!(resolution > 0.0)) throw std::invalid_argument("OccupancyGrid: resolution must be positive");
  if ((dims.array() <= 0).any()) throw std::invalid_argument("OccupancyGrid: dimensions must be positive");
  states_.assign(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), VoxelState::Unknown);
}

OccupancyGrid OccupancyGrid::covering(const Box& bounds, double resolution, bool unknown_as_obstacle) {
  if (bounds.empty()) throw std::invalid_argument("OccupancyGrid::covering: empty bounds");
  const Eigen::Vector3d size = bounds.max - bounds.min;
  Eigen::Vector3i dims;
  for (int a = 0; a < 3; ++a) dims(a) = static_cast<int>(std::ceil(size(a) / resolution - 1e-9));
  return OccupancyGrid(bounds.min, resolution, dims, unknown_as_obstacle);
}

OccupancyGrid::OccupancyGrid(const OccupancyGrid& o)
    : origin_(o.origin_),
      resolution_(o.resolution_),
      dims_(o.dims_),
      unknown_as_obstacle_(o.unknown_as_obstacle_),
      boundary_as_obstacle_(o.boundary_as_obstacle_),
      states_(o.states_),
      known_count_(o.known_count_),
      revision_(o.revision_) {
  std::lock_guard<std::mutex> lock(o.index_mutex_);
  index_ = o.index_;
}

OccupancyGrid& OccupancyGrid::operator=(const OccupancyGrid& o) {
  if (this == &o) return *this;
  std::shared_ptr<const DistanceIndex> idx;
  {
    std::lock_guard<std::mutex> lock(o.index_mutex_);
    idx = o.index_;
  }
  origin_ = o.origin_;
  resolution_ = o.resolution_;
  dims_ = o.dims_;
  unknown_as_obstacle_ = o.unknown_as_obstacle_;
  boundary_as_obstacle_ = o.boundary_as_obstacle_;
  states_ = o.states_;
  known_count_ = o.known_count_;
  revision_ = o.revision_;
  std::lock_guard<std::mutex> lock(index_mutex_);
  index_ = std::move(idx);
  return *this;
}

OccupancyGrid::OccupancyGrid(OccupancyGrid&& o) noexcept
    : origin_(o.origin_),
      resolution_(o.resolution_),
      dims_(o.dims_),
      unknown_as_obstacle_(o.unknown_as_obstacle_),
      boundary_as_obstacle_(o.boundary_as_obstacle_),
      states_(std::move(o.states_)),
      known_count_(o.known_count_),
      revision_(o.revision_),
      index_(std::move(o.index_)) {}

OccupancyGrid& OccupancyGrid::operator=(OccupancyGrid&& o) noexcept {
  origin_ = o.origin_;
  resolution_ = o.resolution_;
  dims_ = o.dims_;
  unknown_as_obstacle_ = o.unknown_as_obstacle_;
  boundary_as_obstacle_ = o.boundary_as_obstacle_;
  states_ = std::move(o.states_);
  known_count_ = o.known_count_;
  revision_ = o.revision_;
  index_ = std::move(o.index_);
  return *this;
}

OccupancyGrid::~OccupancyGrid() = default;

void OccupancyGrid::set_boundary_as_obstacle(bool on) {
  if (on == boundary_as_obstacle_) return;
  boundary_as_obstacle_ = on;
  ++revision_;
}

Box OccupancyGrid::extent() const { return {origin_, origin_ + resolution_ * dims_.cast<double>()}; }

Eigen::Vector3i OccupancyGrid::index_of(const Eigen::Vector3d& p) const {
  return ((p - origin_) / resolution_).array().floor().cast<int>();
}

Eigen::Vector3d OccupancyGrid::center_of(const Eigen::Vector3i& idx) const {
  return origin_ + resolution_ * (idx.cast<double>().array() + 0.5).matrix();
}

void OccupancyGrid::set(const Eigen::Vector3i& idx, VoxelState s) {
  if (!in_bounds(idx)) return;
  VoxelState& cur = states_[linear(idx)];
  if (cur == s) return;
  if (s == VoxelState::Unknown) throw std::logic_error("OccupancyGrid::set: voxels never return to Unknown");
  if (cur == VoxelState::Unknown) ++known_count_;
  cur = s;
  ++revision_;
}

std::shared_ptr<const DistanceIndex> OccupancyGrid::distance_index() const {
  std::lock_guard<std::mutex> lock(index_mutex_);
  if (!index_ || index_->revision() != revision_) index_ = std::make_shared<const DistanceIndex>(*this, revision_);
  return index_;
}

double OccupancyGrid::obstacle_distance(const Eigen::Vector3d& p) const {
  const Eigen::Vector3i idx = index_of(p);
  if (!in_bounds(idx) || is_obstacle(states_[linear(idx)])) return 0.0;
  const double half_diagonal = 0.5 * std::sqrt(3.0) * resolution_;
  return std::max(0.0, distance_index()->nearest(p) - half_diagonal);
}

VoxelState voxel_state(const OccupancyGrid& map, const Eigen::Vector3d& p) { return map.at(p); }

double nearest_obstacle_distance(const OccupancyGrid& map, const Eigen::Vector3d& p) {
  return map.obstacle_distance(p);
}

double explored_volume(const OccupancyGrid& map) {
  const double r = map.resolution();
  return static_cast<double>(map.known_count()) * r * r * r;
}

bool sample_is_valid(const OccupancyGrid& map, const Eigen::Vector3d& p, double clearance) {
  return map.at(p) == VoxelState::Free && map.obstacle_distance(p) >= clearance;
}

void dump_map(const OccupancyGrid& map, const std::filesystem::path& header_path) {
  std::filesystem::path data_path = header_path;
  data_path.replace_extension(".bin");
  {
    std::ofstream h(header_path);
    if (!h) throw std::runtime_error("cannot write " + header_path.string());
    h.precision(17);
    h << "bzx-map 1\n";
    h << "origin " << map.origin().x() << ' ' << map.origin().y() << ' ' << map.origin().z() << '\n';
    h << "resolution " << map.resolution() << '\n';
    h << "dims " << map.dims().x() << ' ' << map.dims().y() << ' ' << map.dims().z() << '\n';
    h << "unknown_as_obstacle " << (map.unknown_as_obstacle() ? 1 : 0) << '\n';
    h << "boundary_as_obstacle " << (map.boundary_as_obstacle() ? 1 : 0) << '\n';
    h << "encoding u8 0=unknown 1=free 2=occupied x-fastest\n";
    h << "data " << data_path.filename().string() << '\n';
  }
  std::ofstream d(data_path, std::ios::binary);
  if (!d) throw std::runtime_error("cannot write " + data_path.string());
  d.write(reinterpret_cast<const char*>(map.states().data()), static_cast<std::streamsize>(map.states().size()));
}

OccupancyGrid load_map_dump(const std::filesystem::path& header_path) {
  std::ifstream h(header_path);
  if (!h) throw std::runtime_error("cannot read " + header_path.string());
  std::string magic;
  int version = 0;
  h >> magic >> version;
  if (magic != "bzx-map" || version != 1) throw std::runtime_error("not a map dump: " + header_path.string());
  Eigen::Vector3d origin;
  double res = 0;
  Eigen::Vector3i dims;
  int uao = 1, bao = 1;
  std::string data_name, line;
  std::getline(h, line);
  while (std::getline(h, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "origin") ls >> origin.x() >> origin.y() >> origin.z();
    else if (key == "resolution") ls >> res;
    else if (key == "dims") ls >> dims.x() >> dims.y() >> dims.z();
    else if (key == "unknown_as_obstacle") ls >> uao;
    else if (key == "boundary_as_obstacle") ls >> bao;
    else if (key == "data") ls >> data_name;
  }
  OccupancyGrid map(origin, res, dims, uao != 0);
  map.set_boundary_as_obstacle(bao != 0);
  std::ifstream d(header_path.parent_path() / data_name, std::ios::binary);
  if (!d) throw std::runtime_error("cannot read map data " + data_name);
  std::vector<char> raw(map.voxel_count());
  d.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (d.gcount() != static_cast<std::streamsize>(raw.size())) throw std::runtime_error("truncated map data " + data_name);
  for (int z = 0; z < dims.z(); ++z)
    for (int y = 0; y < dims.y(); ++y)
      for (int x = 0; x < dims.x(); ++x) {
        const Eigen::Vector3i i(x, y, z);
        const auto s = static_cast<VoxelState>(raw[map.linear(i)]);
        if (s != VoxelState::Unknown) map.set(i, s);
      }
  return map;
}

}  // namespace bzx
