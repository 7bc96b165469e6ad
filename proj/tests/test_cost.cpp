#include "bzx/cost.hpp"

#include "checks.hpp"
#include "doctest.h"

using namespace bzx;

TEST_CASE("cost matrix is symmetric positive semidefinite with the right null space") {
  const Eigen::MatrixXd m = cost_matrix(5, 2, 2.0);
  CHECK((m - m.transpose()).norm() < 1e-12 * m.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  CHECK(es.eigenvalues().minCoeff() > -1e-10 * m.norm());
  // Affine curves have zero acceleration: constant and linear control sequences are in the kernel.
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(6), ramp = Eigen::VectorXd::LinSpaced(6, 0.0, 5.0);
  CHECK(std::abs(ones.dot(m * ones)) < 1e-10);
  CHECK(std::abs(ramp.dot(m * ramp)) < 1e-10);
}

TEST_CASE("cost matrix rejects bad arguments") {
  CHECK_THROWS(cost_matrix(5, 2, 0.0));
  CHECK_THROWS(cost_matrix(5, 6, 1.0));
}

TEST_CASE("efforts match adaptive quadrature") {
  const auto v = checks::closed_form_costs(21);
  INFO(v.detail);
  CHECK(v.pass);
}

TEST_CASE("position effort scales with the inverse cube of the duration") {
  std::mt19937_64 rng(2);
  const auto seg = checks::random_segment(rng, 1.0);
  const double base = position_effort(seg.pos, 1.0);
  for (double d : {0.5, 1.5, 3.0, 5.0}) CHECK(position_effort(seg.pos, d) == doctest::Approx(base / (d * d * d)).epsilon(1e-12));
  CHECK(yaw_effort(seg.yaw, 2.0) == doctest::Approx(yaw_effort(seg.yaw, 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("segment cost combines duration and efforts") {
  std::mt19937_64 rng(4);
  const auto seg = checks::random_segment(rng, 2.5);
  const CostWeights w{0.5, 0.1, 0.2};
  CHECK(segment_cost(seg, w) ==
        doctest::Approx(0.5 * 2.5 + 0.1 * position_effort(seg.pos, 2.5) + 0.2 * yaw_effort(seg.yaw, 2.5)));
  CHECK(segment_cost(BezierSegment::hover({1, 2, 3}, 0.4, 3.0), w) == doctest::Approx(1.5));
}

TEST_CASE("free points and stopping segments are optimal") {
  const auto v = checks::qp_optimality(22, 10, 2000);
  INFO(v.detail);
  CHECK(v.pass);
}

TEST_CASE("assembled segment keeps the prefix and the endpoint") {
  std::mt19937_64 rng(6);
  const auto prev = checks::random_segment(rng, 2.0);
  const auto pre = continuity_prefix(prev, 1.5);
  const Eigen::Vector3d r5(3.0, -1.0, 2.0);
  const auto fp = solve_free_points(pre, r5, 0.7, 1.5, {});
  const auto seg = assemble_segment(pre, fp, r5, 0.7, 1.5);
  CHECK((seg.start() - pre.r0).norm() == 0.0);
  CHECK((seg.end() - r5).norm() == 0.0);
  CHECK(seg.end_yaw() == 0.7);
  CHECK(continuity_prefix(prev, 1.5).r2 == seg.pos.point(2));
}

TEST_CASE("a segment from rest to the same point hovers") {
  const auto prev = BezierSegment::hover({1, 1, 1}, 0.3, 2.0);
  const auto pre = continuity_prefix(prev, 2.0);
  const auto fp = solve_free_points(pre, {1, 1, 1}, 0.3, 2.0, {});
  CHECK((fp.r3 - Eigen::Vector3d(1, 1, 1)).norm() < 1e-12);
  CHECK((fp.r4 - Eigen::Vector3d(1, 1, 1)).norm() < 1e-12);
  CHECK(std::abs(fp.yaw2 - 0.3) < 1e-12);
  const auto safe = solve_safe_segment(prev, 1.0, {});
  CHECK((safe.end() - Eigen::Vector3d(1, 1, 1)).norm() < 1e-12);
}

TEST_CASE("stopping segment ends at rest") {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const auto prev = checks::random_segment(rng, 1.0 + 0.5 * (k % 5));
    const double d = 1.0 + 0.5 * (k % 7);
    const auto safe = solve_safe_segment(prev, d, {});
    CHECK(safe.velocity_at(d).norm() < 1e-12);
    CHECK(safe.acceleration_at(d).norm() < 1e-12);
    CHECK(std::abs(eval(derivative(safe.yaw, d), 1.0)(0)) < 1e-12);
    CHECK((safe.velocity_at(0.0) - prev.velocity_at(prev.duration)).norm() < 1e-9);
  }
}

TEST_CASE("cost weights validate") {
  CHECK_NOTHROW(CostWeights{}.validate());
  CHECK_THROWS(CostWeights{-1.0, 0.1, 0.1}.validate());
}
