#include "bzx/world.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <filesystem>
#include <random>

using namespace bzx;

namespace {

const char* kRoom = R"(
version: 1
name: room
bounds: {min: [0, 0, 0], max: [4, 3, 2]}
obstacles:
  - {min: [1.6, 1.0, 0.0], max: [2.2, 1.6, 2.0]}
)";

OccupancyGrid random_grid(std::mt19937_64& rng, bool unknown_as_obstacle) {
  OccupancyGrid map(Eigen::Vector3d(-1.0, -1.0, 0.0), 0.2, Eigen::Vector3i(12, 10, 8), unknown_as_obstacle);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 12; ++x) {
        const double r = u(rng);
        if (r < 0.06) map.set({x, y, z}, VoxelState::Occupied);
        else if (r < 0.85) map.set({x, y, z}, VoxelState::Free);
      }
  return map;
}

}  // namespace

TEST_CASE("scene parsing and validation") {
  const Scene s = parse_scene(kRoom);
  CHECK(s.obstacles.size() == 1);
  CHECK(s.bounds.volume() == doctest::Approx(24.0));
  CHECK(s.in_obstacle({1.9, 1.3, 1.0}));
  CHECK_FALSE(s.in_obstacle({0.5, 0.5, 1.0}));
  CHECK(s.clearance({0.5, 1.3, 1.0}) == doctest::Approx(0.5));
  CHECK(parse_scene(format_scene(s)).obstacles.size() == 1);

  CHECK_THROWS(parse_scene("version: 1\n"));
  CHECK_THROWS(parse_scene("version: 2\nbounds: {min: [0,0,0], max: [1,1,1]}\n"));
  CHECK_THROWS(parse_scene("version: 1\nbounds: {min: [0,0,0], max: [1,1,1]}\ncolour: red\n"));
  CHECK_THROWS(parse_scene("version: 1\nbounds: {min: [0,0,0], max: [0,1,1]}\n"));
  CHECK_THROWS(parse_scene("version: 1\nbounds: {min: [0,0,0], max: [1,1,1]}\nobstacles:\n  - {min: [-1,-1,-1], max: [2,2,2]}\n"));
  CHECK_THROWS(load_scene("/nonexistent/scene.yaml"));
}

TEST_CASE("obstacles outside the bounds are clipped with a warning") {
  const Scene s = parse_scene(R"(
version: 1
bounds: {min: [0, 0, 0], max: [4, 4, 2]}
obstacles:
  - {min: [3, 3, 0], max: [6, 6, 3]}
  - {min: [7, 7, 0], max: [8, 8, 1]}
)");
  CHECK(s.obstacles.size() == 1);
  CHECK(s.warnings.size() == 3);
  CHECK(s.obstacles[0].max.x() == 4.0);
}

TEST_CASE("ray queries against the scene") {
  const Scene s = parse_scene(kRoom);
  const auto hit = s.first_hit({0.5, 1.3, 1.0}, {1.0, 0.0, 0.0}, 10.0);
  REQUIRE(hit);
  CHECK(*hit == doctest::Approx(1.1));
  CHECK_FALSE(s.first_hit({0.5, 1.3, 1.0}, {1.0, 0.0, 0.0}, 1.0));
  CHECK(s.bounds_exit({0.5, 0.5, 1.0}, {0.0, 0.0, 1.0}) == doctest::Approx(1.0));
}

TEST_CASE("grid indexing round trips") {
  OccupancyGrid map(Eigen::Vector3d(-1.0, 2.0, 0.0), 0.25, Eigen::Vector3i(8, 4, 4));
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 8; ++x) CHECK(map.index_of(map.center_of({x, y, z})) == Eigen::Vector3i(x, y, z));
  CHECK(map.at(Eigen::Vector3d(-5.0, 0.0, 0.0)) == VoxelState::Occupied);
  CHECK(map.extent().max.isApprox(Eigen::Vector3d(1.0, 3.0, 1.0)));
  CHECK(OccupancyGrid::covering({Eigen::Vector3d::Zero(), Eigen::Vector3d(1.0, 0.5, 0.3)}, 0.2).dims() ==
        Eigen::Vector3i(5, 3, 2));
}

TEST_CASE("voxels never return to unknown and revisions count changes") {
  OccupancyGrid map(Eigen::Vector3d::Zero(), 0.2, Eigen::Vector3i(4, 4, 4));
  const auto r0 = map.revision();
  map.set({1, 1, 1}, VoxelState::Free);
  map.set({1, 1, 1}, VoxelState::Free);
  CHECK(map.revision() == r0 + 1);
  CHECK(map.known_count() == 1);
  map.set({1, 1, 1}, VoxelState::Occupied);
  CHECK(map.known_count() == 1);
  CHECK_THROWS_AS(map.set({1, 1, 1}, VoxelState::Unknown), std::logic_error);
  CHECK(explored_volume(map) == doctest::Approx(0.008));
}

TEST_CASE("obstacle distance equals the brute-force oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ux(-1.0, 1.4), uy(-1.0, 1.0), uz(0.0, 1.6);
  for (const bool unknown_as_obstacle : {true, false}) {
    for (const bool border : {true, false}) {
      auto map = random_grid(rng, unknown_as_obstacle);
      map.set_boundary_as_obstacle(border);
      for (int k = 0; k < 300; ++k) {
        const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
        CHECK(map.obstacle_distance(p) == doctest::Approx(oracle::brute_force_distance(map, p)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("obstacle distance is 1-Lipschitz and never exceeds the true clearance") {
  std::mt19937_64 rng(37);
  auto map = random_grid(rng, true);
  std::uniform_real_distribution<double> ux(-1.0, 1.4), uy(-1.0, 1.0), uz(0.0, 1.6), step(-0.3, 0.3);
  for (int k = 0; k < 2000; ++k) {
    const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
    const Eigen::Vector3d q = p + Eigen::Vector3d(step(rng), step(rng), step(rng));
    CHECK(std::abs(map.obstacle_distance(p) - map.obstacle_distance(q)) <= (p - q).norm() + 1e-12);
  }
  // Conservative against the true box geometry of the obstacle voxels.
  const double h = 0.5 * map.resolution();
  for (int k = 0; k < 200; ++k) {
    const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
    double truth = std::numeric_limits<double>::infinity();
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x)
          if (map.is_obstacle(map.at(Eigen::Vector3i(x, y, z)))) {
            const Eigen::Vector3d c = map.center_of({x, y, z});
            truth = std::min(truth, Box{c.array() - h, c.array() + h}.distance(p));
          }
    CHECK(map.obstacle_distance(p) <= truth + 1e-12);
  }
}

TEST_CASE("distance cache follows map edits") {
  OccupancyGrid map(Eigen::Vector3d::Zero(), 0.2, Eigen::Vector3i(10, 10, 10), false);
  map.set_boundary_as_obstacle(false);
  const Eigen::Vector3d p(1.01, 1.01, 1.01);
  CHECK(std::isinf(map.obstacle_distance(p)));
  map.set({2, 2, 2}, VoxelState::Occupied);
  CHECK(map.obstacle_distance(p) == doctest::Approx(oracle::brute_force_distance(map, p)));
  map.set_boundary_as_obstacle(true);
  CHECK(map.obstacle_distance(p) == doctest::Approx(oracle::brute_force_distance(map, p)));
}

TEST_CASE("depth scan marks free space and hits") {
  const Scene s = parse_scene(kRoom);
  auto map = OccupancyGrid::covering(s.bounds, 0.1);
  const CameraModel cam{90.0, 60.0, 0.2, 5.0, 2.0};
  integrate_depth_scan(map, s, {{0.5, 1.3, 1.0}, 0.0}, cam);
  CHECK(map.at(Eigen::Vector3d(1.0, 1.3, 1.0)) == VoxelState::Free);
  CHECK(map.at(Eigen::Vector3d(1.65, 1.3, 1.0)) == VoxelState::Occupied);
  CHECK(map.at(Eigen::Vector3d(2.5, 1.3, 1.0)) == VoxelState::Unknown);
  // Behind the camera nothing is seen.
  CHECK(map.at(Eigen::Vector3d(0.05, 1.3, 1.0)) == VoxelState::Unknown);
  // Every voxel marked Occupied lies inside an obstacle or on the bounds.
  const Eigen::Vector3i d = map.dims();
  std::size_t wrong = 0;
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const Eigen::Vector3i i(x, y, z);
        if (map.at(i) != VoxelState::Occupied) continue;
        const Eigen::Vector3d c = map.center_of(i);
        const bool near_obstacle = s.obstacles[0].distance(c) <= 0.1;
        const bool near_border = (c - s.bounds.min).minCoeff() <= 0.1 || (s.bounds.max - c).minCoeff() <= 0.1;
        wrong += (near_obstacle || near_border) ? 0 : 1;
      }
  CHECK(wrong == 0);
  CHECK_THROWS_AS(integrate_depth_scan(map, s, {{9.0, 0.0, 0.0}, 0.0}, cam), std::out_of_range);
}

TEST_CASE("body marking never clears obstacle voxels") {
  const Scene s = parse_scene(kRoom);
  auto map = OccupancyGrid::covering(s.bounds, 0.2);
  mark_body_free(map, s, {1.3, 1.3, 1.0}, 1.0);
  CHECK(map.at(Eigen::Vector3d(1.3, 1.3, 1.0)) == VoxelState::Free);
  CHECK(map.at(Eigen::Vector3d(1.9, 1.3, 1.0)) == VoxelState::Unknown);
  CHECK(map.at(Eigen::Vector3d(1.3, 1.3, 2.5)) == VoxelState::Occupied);
}

TEST_CASE("map dumps round trip") {
  std::mt19937_64 rng(41);
  auto map = random_grid(rng, true);
  map.set_boundary_as_obstacle(false);
  const auto path = std::filesystem::temp_directory_path() / "bzx_test_map.map";
  dump_map(map, path);
  const auto back = load_map_dump(path);
  CHECK(back.states() == map.states());
  CHECK(back.dims() == map.dims());
  CHECK(back.origin() == map.origin());
  CHECK(back.known_count() == map.known_count());
  CHECK_FALSE(back.boundary_as_obstacle());
  CHECK(back.obstacle_distance({0.1, 0.1, 0.5}) == map.obstacle_distance({0.1, 0.1, 0.5}));
  CHECK_THROWS(load_map_dump("/nonexistent/x.map"));
}

TEST_CASE("camera validation") {
  CHECK_NOTHROW(CameraModel{}.validate());
  CHECK_THROWS(CameraModel{115.0, 60.0, 5.0, 1.0, 2.0}.validate());
  CHECK_THROWS(CameraModel{190.0, 60.0, 0.3, 5.0, 2.0}.validate());
}
