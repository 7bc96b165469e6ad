#include "bzx/bezier.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <random>

using namespace bzx;

namespace {

Eigen::Matrix3Xd random_points(int count, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::Matrix3Xd cp(3, count);
  for (int i = 0; i < count; ++i) cp.col(i) = Eigen::Vector3d(u(rng), u(rng), u(rng));
  return cp;
}

}  // namespace

TEST_CASE("bernstein basis sums to one") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double u = u01(rng);
    for (int n = 0; n <= 8; ++n) {
      double sum = 0.0;
      for (int i = 0; i <= n; ++i) sum += bernstein_basis(i, n, u);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("bernstein basis rejects bad arguments") {
  CHECK_THROWS_AS(bernstein_basis(3, 2, 0.5), std::domain_error);
  CHECK_THROWS_AS(bernstein_basis(-1, 2, 0.5), std::domain_error);
  CHECK_THROWS_AS(bernstein_basis(1, 2, 1.5), std::domain_error);
  CHECK_THROWS_AS(bernstein_basis(1, 2, std::nan("")), std::domain_error);
  CHECK(bernstein_basis(0, 0, 0.3) == doctest::Approx(1.0));
}

TEST_CASE("evaluation matches de Casteljau") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int n = 0; n <= 8; ++n) {
    const BezierCurve3D c(random_points(n + 1, rng, 3.0));
    for (int k = 0; k < 200; ++k) {
      const double u = u01(rng);
      CHECK((eval(c, u) - oracle::de_casteljau(c.control_points(), u)).norm() < 1e-12);
    }
  }
}

TEST_CASE("endpoints interpolate the first and last control points") {
  std::mt19937_64 rng(3);
  const BezierCurve3D c(random_points(6, rng));
  CHECK((eval(c, 0.0) - c.point(0)).norm() == 0.0);
  CHECK((eval(c, 1.0) - c.point(5)).norm() < 1e-15);
  CHECK_THROWS_AS(eval(c, -0.1), std::domain_error);
}

TEST_CASE("derivative matches central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u01(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    const double duration = 1.0 + trial % 4;
    const BezierCurve3D c(random_points(6, rng));
    const auto d1 = derivative(c, duration);
    const auto d2 = derivative(d1, duration);
    CHECK(d1.degree() == 4);
    const double h = 1e-4;
    for (int k = 0; k < 20; ++k) {
      const double t = u01(rng) * duration;
      const auto at = [&](double s) { return eval(c, s / duration); };
      const Eigen::Vector3d fd1 = (at(t + h) - at(t - h)) / (2.0 * h);
      const Eigen::Vector3d fd2 = (at(t + h) - 2.0 * at(t) + at(t - h)) / (h * h);
      CHECK((eval(d1, t / duration) - fd1).norm() < 1e-6);
      CHECK((eval(d2, t / duration) - fd2).norm() < 1e-5);
    }
  }
  CHECK_THROWS_AS(derivative(BezierCurve3D(random_points(1, rng)), 1.0), std::domain_error);
  CHECK_THROWS_AS(derivative(BezierCurve3D(random_points(3, rng)), 0.0), std::domain_error);
}

TEST_CASE("derivative agrees with the power basis") {
  std::mt19937_64 rng(9);
  const BezierCurve3D c(random_points(6, rng, 2.0));
  const double duration = 2.5;
  const Eigen::MatrixXd a = oracle::power_basis(c.control_points());
  const auto d2 = derivative(derivative(c, duration), duration);
  for (double t = 0.0; t <= duration; t += 0.25)
    CHECK((eval(d2, t / duration) - oracle::poly_derivative(a, 2, duration, t)).norm() < 1e-10);
}

TEST_CASE("sphere envelope contains the curve") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const BezierCurve3D c(random_points(6, rng, 2.0));
    const auto env = sphere_envelope(c);
    REQUIRE(env.size() == 6);
    for (int k = 0; k <= 1000; ++k) {
      const Eigen::Vector3d p = eval(c, k / 1000.0);
      bool inside = false;
      for (const auto& s : env) inside = inside || (p - s.center).norm() <= s.radius + 1e-12;
      CHECK(inside);
    }
  }
}

TEST_CASE("envelope test against a wall") {
  // Straight segment along x at height z; the wall is the plane z = 0.
  Eigen::Matrix3Xd cp(3, 6);
  for (int i = 0; i < 6; ++i) cp.col(i) = Eigen::Vector3d(0.2 * i, 0.0, 1.0);
  const BezierCurve3D c(cp);
  auto wall = [](const Eigen::Vector3d& p) { return p.z(); };
  CHECK(is_collision_free(c, wall, 0.5));
  CHECK_FALSE(is_collision_free(c, wall, 1.0));
  // The single ball around the hull is larger than every envelope sphere.
  CHECK_FALSE(single_sphere_collision_check(c, wall, 0.5));
  CHECK(single_sphere_collision_check(c, wall, 0.4));
}

TEST_CASE("hover segment stays put") {
  const auto s = BezierSegment::hover({1.0, 2.0, 3.0}, 0.5, 2.0);
  CHECK((s.position_at(1.3) - Eigen::Vector3d(1.0, 2.0, 3.0)).norm() < 1e-14);
  CHECK(s.velocity_at(0.7).norm() < 1e-14);
  CHECK(s.yaw_at(2.0) == 0.5);
  CHECK(check_dynamic_bounds(s, 0.0, 0.0));
}

TEST_CASE("segment constructor enforces degrees and duration") {
  std::mt19937_64 rng(1);
  const BezierCurve1D yaw(Eigen::RowVector4d::Zero());
  CHECK_THROWS_AS(BezierSegment(BezierCurve3D(random_points(4, rng)), yaw, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(BezierSegment(BezierCurve3D(random_points(6, rng)), yaw, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(BezierCurve3D(Eigen::Matrix3Xd(3, 0)), std::invalid_argument);
}

TEST_CASE("continuity prefix carries derivatives across the joint") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const double d_prev = 1.0 + 0.5 * (trial % 9);
    const double d_next = 1.0 + 0.5 * ((trial * 7) % 9);
    Eigen::RowVector4d y;
    y << 0.1, 0.4, -0.2, 0.3;
    const BezierSegment prev(BezierCurve3D(random_points(6, rng)), BezierCurve1D(y), d_prev);
    const auto pre = continuity_prefix(prev, d_next);
    Eigen::Matrix3Xd cp = random_points(6, rng);
    cp.col(0) = pre.r0;
    cp.col(1) = pre.r1;
    cp.col(2) = pre.r2;
    Eigen::RowVector4d ny;
    ny << pre.yaw0, pre.yaw1, 1.0, 2.0;
    const BezierSegment next(BezierCurve3D(cp), BezierCurve1D(ny), d_next);
    CHECK((prev.position_at(d_prev) - next.position_at(0.0)).norm() < 1e-12);
    CHECK((prev.velocity_at(d_prev) - next.velocity_at(0.0)).norm() < 1e-9);
    CHECK((prev.acceleration_at(d_prev) - next.acceleration_at(0.0)).norm() < 1e-9);
    CHECK(std::abs(prev.yaw_at(d_prev) - next.yaw_at(0.0)) < 1e-12);
    const double rate_prev = eval(derivative(prev.yaw, d_prev), 1.0)(0);
    const double rate_next = eval(derivative(next.yaw, d_next), 0.0)(0);
    CHECK(std::abs(rate_prev - rate_next) < 1e-9);
  }
}

TEST_CASE("dynamic bounds from the derivative hulls") {
  Eigen::Matrix3Xd cp(3, 6);
  for (int i = 0; i < 6; ++i) cp.col(i) = Eigen::Vector3d(i, 0.0, 0.0);
  const BezierSegment s(BezierCurve3D(cp), BezierCurve1D(Eigen::RowVector4d::Zero()), 5.0);
  // Velocity control points are all 5 * 1 / 5 = 1 m/s; acceleration is zero.
  CHECK(check_dynamic_bounds(s, 1.0 + 1e-12, 0.1));
  CHECK_FALSE(check_dynamic_bounds(s, 0.99, 0.1));
}
