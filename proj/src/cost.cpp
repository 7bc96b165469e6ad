#include "bzx/cost.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace bzx {

void CostWeights::validate() const {
  if (duration < 0.0 || position < 0.0 || yaw < 0.0) throw std::invalid_argument("cost weights must be non-negative");
  if (duration == 0.0 && position == 0.0 && yaw == 0.0) throw std::invalid_argument("cost weights cannot all be zero");
}

namespace {

// Maps control points of a degree-n curve to the control points of its `order`-th
// derivative with respect to u (no time scaling).
Eigen::MatrixXd derivative_map(int degree, int order) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(degree + 1, degree + 1);
  for (int k = 0; k < order; ++k) {
    const int n = degree - k;
    Eigen::MatrixXd step = Eigen::MatrixXd::Zero(n, n + 1);
    for (int i = 0; i < n; ++i) {
      step(i, i) = -n;
      step(i, i + 1) = n;
    }
    d = (step * d).eval();
  }
  return d;
}

// int_0^1 B_i^m(u) B_j^m(u) du
Eigen::MatrixXd bernstein_product_integrals(int m) {
  Eigen::MatrixXd g(m + 1, m + 1);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= m; ++j)
      g(i, j) = binomial(m, i) * binomial(m, j) / ((2.0 * m + 1.0) * binomial(2 * m, i + j));
  return g;
}

Eigen::Vector2d solve_pair(const Eigen::MatrixXd& m, const Eigen::Vector4d& fixed) {
  // Unknowns at indices 3, 4; knowns at 0, 1, 2, 5.
  Eigen::Matrix2d hff;
  hff << m(3, 3), m(3, 4), m(4, 3), m(4, 4);
  Eigen::Matrix<double, 2, 4> hfx;
  hfx << m(3, 0), m(3, 1), m(3, 2), m(3, 5), m(4, 0), m(4, 1), m(4, 2), m(4, 5);
  const double scale = hff.cwiseAbs().maxCoeff();
  if (!(std::abs(hff.determinant()) > 1e-14 * scale * scale))
    throw std::runtime_error("solve_free_points: singular reduced Hessian");
  return hff.partialPivLu().solve(-hfx * fixed);
}

}  // namespace

Eigen::MatrixXd cost_matrix(int degree, int order, double duration) {
  if (order < 1 || order > degree) throw std::domain_error("cost_matrix: order must lie in [1, degree]");
  if (!(duration > 0.0)) throw std::domain_error("cost_matrix: duration must be positive");
  const Eigen::MatrixXd d = derivative_map(degree, order);
  const Eigen::MatrixXd g = bernstein_product_integrals(degree - order);
  // d^k/dt^k = delta^-k d^k/du^k and dt = delta du.
  const double scale = std::pow(duration, 1.0 - 2.0 * order);
  Eigen::MatrixXd m = scale * d.transpose() * g * d;
  return 0.5 * (m + m.transpose());
}

double position_effort(const BezierCurve3D& pos, double duration) {
  const Eigen::MatrixXd m = cost_matrix(pos.degree(), kPositionCostOrder, duration);
  const auto& cp = pos.control_points();
  double c = 0.0;
  for (int axis = 0; axis < 3; ++axis) c += cp.row(axis) * m * cp.row(axis).transpose();
  return c;
}

double yaw_effort(const BezierCurve1D& yaw, double duration) {
  const Eigen::MatrixXd m = cost_matrix(yaw.degree(), kYawCostOrder, duration);
  const auto& cp = yaw.control_points();
  return (cp * m * cp.transpose())(0, 0);
}

double segment_cost(const BezierSegment& segment, const CostWeights& w) {
  return w.duration * segment.duration + w.position * position_effort(segment.pos, segment.duration) +
         w.yaw * yaw_effort(segment.yaw, segment.duration);
}

FreePoints solve_free_points(const ContinuityPrefix& prefix, const Eigen::Vector3d& r5, double yaw3,
                             double duration, const CostWeights& /*weights*/) {
  if (!(duration > 0.0)) throw std::domain_error("solve_free_points: duration must be positive");
  // The weights scale whole decoupled blocks, so the minimiser does not depend on them.
  const Eigen::MatrixXd mr = cost_matrix(kPositionDegree, kPositionCostOrder, duration);
  FreePoints out;
  for (int axis = 0; axis < 3; ++axis) {
    const Eigen::Vector4d fixed(prefix.r0(axis), prefix.r1(axis), prefix.r2(axis), r5(axis));
    const Eigen::Vector2d x = solve_pair(mr, fixed);
    out.r3(axis) = x(0);
    out.r4(axis) = x(1);
  }
  const Eigen::MatrixXd my = cost_matrix(kYawDegree, kYawCostOrder, duration);
  if (!(my(2, 2) > 0.0)) throw std::runtime_error("solve_free_points: singular yaw Hessian");
  out.yaw2 = -(my(2, 0) * prefix.yaw0 + my(2, 1) * prefix.yaw1 + my(2, 3) * yaw3) / my(2, 2);
  return out;
}

BezierSegment assemble_segment(const ContinuityPrefix& prefix, const FreePoints& free, const Eigen::Vector3d& r5,
                               double yaw3, double duration) {
  Eigen::Matrix<double, 3, Eigen::Dynamic> cp(3, kPositionDegree + 1);
  cp << prefix.r0, prefix.r1, prefix.r2, free.r3, free.r4, r5;
  Eigen::Matrix<double, 1, Eigen::Dynamic> cy(1, kYawDegree + 1);
  cy << prefix.yaw0, prefix.yaw1, free.yaw2, yaw3;
  return {BezierCurve3D(cp), BezierCurve1D(cy), duration};
}

BezierSegment solve_safe_segment(const BezierSegment& prev, double duration, const CostWeights& /*weights*/) {
  const ContinuityPrefix prefix = continuity_prefix(prev, duration);

  // cp = fixed + e * s with e selecting the tied tail.
  const Eigen::MatrixXd mr = cost_matrix(kPositionDegree, kPositionCostOrder, duration);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(kPositionDegree + 1);
  e.tail<3>().setOnes();
  const double h = e.dot(mr * e);
  if (!(h > 0.0)) throw std::runtime_error("solve_safe_segment: singular stop problem");
  Eigen::Vector3d stop;
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(kPositionDegree + 1);
    f.head<3>() << prefix.r0(axis), prefix.r1(axis), prefix.r2(axis);
    stop(axis) = -e.dot(mr * f) / h;
  }

  const Eigen::MatrixXd my = cost_matrix(kYawDegree, kYawCostOrder, duration);
  Eigen::Vector4d ey(0, 0, 1, 1);
  Eigen::Vector4d fy(prefix.yaw0, prefix.yaw1, 0, 0);
  const double yaw_stop = -ey.dot(my * fy) / ey.dot(my * ey);

  Eigen::Matrix<double, 3, Eigen::Dynamic> cp(3, kPositionDegree + 1);
  cp << prefix.r0, prefix.r1, prefix.r2, stop, stop, stop;
  Eigen::Matrix<double, 1, Eigen::Dynamic> cy(1, kYawDegree + 1);
  cy << prefix.yaw0, prefix.yaw1, yaw_stop, yaw_stop;
  return {BezierCurve3D(cp), BezierCurve1D(cy), duration};
}

}  // namespace bzx
