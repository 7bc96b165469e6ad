#pragma once

#include "bzx/bezier.hpp"

#include <Eigen/Core>

namespace bzx {

/// Derivative orders penalised by the effort terms: acceleration for position, rate for yaw.
inline constexpr int kPositionCostOrder = 2;
inline constexpr int kYawCostOrder = 1;

/// Weights of duration, position effort and yaw effort in the node cost.
struct CostWeights {
  double duration = 0.5;
  double position = 0.1;
  double yaw = 0.1;

  void validate() const;
};

/// Gram matrix M with cp^T M cp = int_0^duration |d^order q / dt^order|^2 dt for a scalar
/// Bezier curve of the given degree traversed in `duration` seconds.
Eigen::MatrixXd cost_matrix(int degree, int order, double duration);

/// Weighted sum of duration, squared-acceleration integral over x/y/z and squared yaw rate integral.
double segment_cost(const BezierSegment& segment, const CostWeights& weights);

/// Effort part only (no duration term).
double position_effort(const BezierCurve3D& pos, double duration);
double yaw_effort(const BezierCurve1D& yaw, double duration);

struct FreePoints {
  Eigen::Vector3d r3, r4;
  double yaw2 = 0.0;
};

/// Effort-optimal interior points given the continuity prefix and the endpoint. Position axes
/// and yaw decouple, so each is a 2x2 (resp. 1x1) linear solve on the reduced Gram matrix.
FreePoints solve_free_points(const ContinuityPrefix& prefix, const Eigen::Vector3d& r5, double yaw3,
                             double duration, const CostWeights& weights);

BezierSegment assemble_segment(const ContinuityPrefix& prefix, const FreePoints& free,
                               const Eigen::Vector3d& r5, double yaw3, double duration);

/// Stopping segment continuous with `prev`: r3 = r4 = r5 and yaw2 = yaw3 give zero terminal
/// velocity, acceleration and yaw rate; the stop point and final yaw minimise effort.
BezierSegment solve_safe_segment(const BezierSegment& prev, double duration, const CostWeights& weights);

}  // namespace bzx
