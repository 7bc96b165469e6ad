#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace bzx {

/// Polynomial curve in Bernstein form, q(u) = sum_i B_i^n(u) q_i for u in [0, 1].
/// Control points are stored column-wise; the degree is cols() - 1.
template <typename Scalar, int Dim>
class BezierCurve {
 public:
  using Point = Eigen::Matrix<Scalar, Dim, 1>;
  using ControlPoints = Eigen::Matrix<Scalar, Dim, Eigen::Dynamic>;

  BezierCurve() = default;

  explicit BezierCurve(ControlPoints control_points) : cp_(std::move(control_points)) {
    if (cp_.cols() < 1) throw std::invalid_argument("BezierCurve: needs at least one control point");
  }

  int degree() const { return static_cast<int>(cp_.cols()) - 1; }
  int size() const { return static_cast<int>(cp_.cols()); }

  const ControlPoints& control_points() const { return cp_; }
  Point point(int i) const { return cp_.col(i); }

 private:
  ControlPoints cp_;
};

using BezierCurve1D = BezierCurve<double, 1>;
using BezierCurve3D = BezierCurve<double, 3>;

template <typename Scalar, int Dim>
struct Sphere {
  Eigen::Matrix<Scalar, Dim, 1> center;
  Scalar radius;
};

template <typename Scalar, int Dim>
using SphereEnvelope = std::vector<Sphere<Scalar, Dim>>;

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

template <typename Scalar = double>
Scalar bernstein_basis(int i, int n, Scalar u) {
  if (n < 0 || i < 0 || i > n) throw std::domain_error("bernstein_basis: index outside [0, n]");
  if (!(u >= Scalar(0) && u <= Scalar(1))) throw std::domain_error("bernstein_basis: u outside [0, 1]");
  using std::pow;
  return Scalar(binomial(n, i)) * pow(u, Scalar(i)) * pow(Scalar(1) - u, Scalar(n - i));
}

template <typename Scalar, int Dim>
typename BezierCurve<Scalar, Dim>::Point eval(const BezierCurve<Scalar, Dim>& curve, Scalar u) {
  if (!(u >= Scalar(0) && u <= Scalar(1))) throw std::domain_error("eval: u outside [0, 1]");
  const int n = curve.degree();
  const auto& cp = curve.control_points();
  // Powers of u and (1-u) built incrementally; identical to summing bernstein_basis terms.
  std::vector<Scalar> up(n + 1), vp(n + 1);
  up[0] = vp[0] = Scalar(1);
  for (int i = 1; i <= n; ++i) {
    up[i] = up[i - 1] * u;
    vp[i] = vp[i - 1] * (Scalar(1) - u);
  }
  typename BezierCurve<Scalar, Dim>::Point p = cp.col(0) * Scalar(0);
  for (int i = 0; i <= n; ++i) p += (Scalar(binomial(n, i)) * up[i] * vp[n - i]) * cp.col(i);
  return p;
}

/// Time-domain derivative of a curve traversed in `duration` seconds: a curve of degree n-1
/// with control points n (q_{i+1} - q_i) / duration.
template <typename Scalar, int Dim>
BezierCurve<Scalar, Dim> derivative(const BezierCurve<Scalar, Dim>& curve, Scalar duration) {
  if (!(duration > Scalar(0))) throw std::domain_error("derivative: duration must be positive");
  const int n = curve.degree();
  if (n < 1) throw std::domain_error("derivative: degree must be at least 1");
  const auto& cp = curve.control_points();
  typename BezierCurve<Scalar, Dim>::ControlPoints d(cp.rows(), n);
  for (int i = 0; i < n; ++i) d.col(i) = (Scalar(n) / duration) * (cp.col(i + 1) - cp.col(i));
  return BezierCurve<Scalar, Dim>(std::move(d));
}

template <typename Scalar, int Dim>
typename BezierCurve<Scalar, Dim>::Point hull_centroid(const BezierCurve<Scalar, Dim>& curve) {
  return curve.control_points().rowwise().mean();
}

/// One sphere per control point, spanning from the point to the hull centroid.
/// Their union contains every hull edge and hence the curve.
template <typename Scalar, int Dim>
SphereEnvelope<Scalar, Dim> sphere_envelope(const BezierCurve<Scalar, Dim>& curve) {
  const auto c = hull_centroid(curve);
  SphereEnvelope<Scalar, Dim> env;
  env.reserve(curve.size());
  for (int i = 0; i < curve.size(); ++i) {
    const auto ci = ((curve.point(i) + c) / Scalar(2)).eval();
    env.push_back({ci, (curve.point(i) - ci).norm()});
  }
  return env;
}

/// Envelope test: every sphere must keep `d_safe` of clearance from the nearest obstacle,
/// d_obs(c_i) - r_i - d_safe > 0. `distance` maps a point to obstacle distance in meters.
template <typename Scalar, int Dim, typename DistanceFn>
bool is_collision_free(const BezierCurve<Scalar, Dim>& curve, DistanceFn&& distance, Scalar d_safe) {
  for (const auto& s : sphere_envelope(curve)) {
    if (!(distance(s.center) - s.radius - d_safe > Scalar(0))) return false;
  }
  return true;
}

/// Baseline check with a single ball around the hull centroid.
template <typename Scalar, int Dim, typename DistanceFn>
bool single_sphere_collision_check(const BezierCurve<Scalar, Dim>& curve, DistanceFn&& distance,
                                   Scalar d_safe) {
  const auto c = hull_centroid(curve);
  Scalar radius = 0;
  for (int i = 0; i < curve.size(); ++i) radius = std::max(radius, (curve.point(i) - c).norm());
  return distance(c) - radius - d_safe > Scalar(0);
}

inline constexpr int kPositionDegree = 5;
inline constexpr int kYawDegree = 3;

/// One tree edge: quintic position, cubic yaw, shared duration.
struct BezierSegment {
  BezierCurve3D pos;
  BezierCurve1D yaw;
  double duration = 0.0;

  BezierSegment() = default;
  BezierSegment(BezierCurve3D p, BezierCurve1D y, double d) : pos(std::move(p)), yaw(std::move(y)), duration(d) {
    if (pos.degree() != kPositionDegree) throw std::invalid_argument("BezierSegment: position must be quintic");
    if (yaw.degree() != kYawDegree) throw std::invalid_argument("BezierSegment: yaw must be cubic");
    if (!(duration > 0.0)) throw std::invalid_argument("BezierSegment: duration must be positive");
  }

  /// Stationary segment holding `p` and `heading` for `d` seconds.
  static BezierSegment hover(const Eigen::Vector3d& p, double heading, double d) {
    Eigen::Matrix<double, 3, Eigen::Dynamic> cp = p.replicate(1, kPositionDegree + 1);
    Eigen::Matrix<double, 1, Eigen::Dynamic> cy = Eigen::Matrix<double, 1, Eigen::Dynamic>::Constant(1, kYawDegree + 1, heading);
    return {BezierCurve3D(cp), BezierCurve1D(cy), d};
  }

  Eigen::Vector3d start() const { return pos.point(0); }
  Eigen::Vector3d end() const { return pos.point(kPositionDegree); }
  double end_yaw() const { return yaw.point(kYawDegree)(0); }

  Eigen::Vector3d position_at(double t) const { return eval(pos, clamp_u(t)); }
  Eigen::Vector3d velocity_at(double t) const { return eval(derivative(pos, duration), clamp_u(t)); }
  Eigen::Vector3d acceleration_at(double t) const {
    return eval(derivative(derivative(pos, duration), duration), clamp_u(t));
  }
  double yaw_at(double t) const { return eval(yaw, clamp_u(t))(0); }

 private:
  double clamp_u(double t) const { return std::clamp(t / duration, 0.0, 1.0); }
};

/// The first control points of a follow-up segment fixed by continuity with `prev`.
struct ContinuityPrefix {
  Eigen::Vector3d r0, r1, r2;
  double yaw0 = 0.0, yaw1 = 0.0;
};

/// Position, velocity and acceleration of the position curve and position and rate of the
/// yaw curve carry over the joint when the next segment lasts `duration` seconds.
inline ContinuityPrefix continuity_prefix(const BezierSegment& prev, double duration) {
  if (!(duration > 0.0)) throw std::domain_error("continuity_prefix: duration must be positive");
  const double s = duration / prev.duration;
  const auto& p = prev.pos.control_points();
  const auto& y = prev.yaw.control_points();
  ContinuityPrefix out;
  out.r0 = p.col(5);
  out.r1 = out.r0 + s * (p.col(5) - p.col(4));
  out.r2 = 2.0 * out.r1 - out.r0 + s * s * (p.col(5) - 2.0 * p.col(4) + p.col(3));
  out.yaw0 = y(0, 3);
  out.yaw1 = out.yaw0 + s * (y(0, 3) - y(0, 2));
  return out;
}

/// Sufficient test via the hulls of the velocity and acceleration curves.
inline bool check_dynamic_bounds(const BezierSegment& segment, double v_max, double a_max) {
  const auto vel = derivative(segment.pos, segment.duration);
  const auto acc = derivative(vel, segment.duration);
  for (int i = 0; i < vel.size(); ++i)
    if (vel.point(i).norm() > v_max) return false;
  for (int i = 0; i < acc.size(); ++i)
    if (acc.point(i).norm() > a_max) return false;
  return true;
}

}  // namespace bzx
