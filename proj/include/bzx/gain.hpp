#pragma once

#include "bzx/world.hpp"

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace bzx {

/// Volume of the spherical frustum seen by the camera between min and max range.
double fov_volume(const CameraModel& camera);

/// Angular layout of the sparse gain rays: a full azimuth sweep in bins, the vertical FoV in
/// elevation cells, one ray through each cell centre.
struct GainRayConfig {
  double azimuth_bin_deg = 5.0;
  double elevation_step_deg = 5.0;
  /// Radial step along each ray as a fraction of the map resolution.
  double radial_step_fraction = 0.5;
};

struct YawGain {
  double best_gain = 0.0;   ///< m^3
  double best_yaw = 0.0;    ///< radians, in (-pi, pi]
  std::vector<double> bins;     ///< unknown volume per azimuth bin, m^3
  std::vector<double> by_yaw;   ///< windowed gain for a yaw at each bin centre, m^3
  std::vector<double> yaws;     ///< the candidate yaws, radians
};

/// Unknown volume reachable by the sensor from `position` as a function of heading. Rays stop
/// at Occupied voxels and at the map border.
YawGain explicit_gain(const OccupancyGrid& map, const Eigen::Vector3d& position, const CameraModel& camera,
                      const GainRayConfig& rays = {});

double wrap_angle(double a);

struct GainSample {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double gain = 0.0;
  double best_yaw = 0.0;
  std::uint64_t stamp = 0;
  std::uint64_t id = 0;
};

/// Gain samples with a minimum pairwise separation, spatially indexed by an R-tree.
class GainCache {
 public:
  explicit GainCache(double min_separation = 1.5, std::size_t capacity = 500);
  GainCache(const GainCache& other);
  GainCache& operator=(const GainCache& other);
  GainCache(GainCache&&) noexcept;
  GainCache& operator=(GainCache&&) noexcept;
  ~GainCache();

  double min_separation() const { return min_separation_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  /// True when no cached sample lies closer than min_separation.
  bool accepts(const Eigen::Vector3d& p) const;
  /// Inserts iff accepts(sample.position). At capacity the oldest sample is evicted first.
  bool insert(GainSample sample);
  std::optional<GainSample> nearest(const Eigen::Vector3d& p) const;
  /// Samples ordered by insertion id.
  const std::map<std::uint64_t, GainSample>& samples() const { return samples_; }
  void update(std::uint64_t id, double gain, double best_yaw, std::uint64_t stamp);
  /// Up to `budget` ids with stamp < `current`, stalest first.
  std::vector<std::uint64_t> stalest(std::size_t budget, std::uint64_t current) const;

  Eigen::Matrix3Xd positions() const;
  Eigen::VectorXd gains() const;

  /// One sample per line: x y z gain yaw stamp.
  void write(std::ostream& out) const;
  static GainCache read(std::istream& in, double min_separation, std::size_t capacity = 500);

 private:
  struct Index;
  double min_separation_;
  std::size_t capacity_;
  std::uint64_t next_id_ = 0;
  std::map<std::uint64_t, GainSample> samples_;
  std::unique_ptr<Index> index_;
};

bool cache_insert(GainCache& cache, const GainSample& sample);

/// Re-runs explicit_gain on the stalest samples; returns how many were refreshed.
std::size_t cache_reevaluate(GainCache& cache, const OccupancyGrid& map, const CameraModel& camera,
                             const GainRayConfig& rays, std::size_t budget, std::uint64_t stamp);

/// Constant-mean GP over position. Gains are handled in units of the prior mean internally,
/// so the kernel amplitude is 1 and `noise` is a variance in those units.
struct GpModel {
  double prior_mean = 1.0;   ///< V_fov, m^3
  double length_scale = 1.0; ///< m
  double noise = 1e-6;
};

inline double se_kernel(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double length_scale) {
  return std::exp(-(a - b).squaredNorm() / (2.0 * length_scale * length_scale));
}

Eigen::MatrixXd gram_matrix(const Eigen::Matrix3Xd& x, double length_scale, double noise);

/// log p(y | X, tau) for zero-mean residuals y. Returns nullopt if the Gram matrix is not PD.
std::optional<double> gp_log_marginal_likelihood(const Eigen::Matrix3Xd& x, const Eigen::VectorXd& residuals,
                                                 double length_scale, double noise);
/// Same, on the cache residuals gain / prior_mean - 1.
std::optional<double> gp_log_marginal_likelihood(const GainCache& cache, double prior_mean, double length_scale,
                                                 double noise);

/// Length scale maximising the marginal likelihood on a 25-point log grid over
/// [0.1, 10] * sampling_radius refined by golden-section search. Ties keep the smaller value.
double gp_fit_tau(const Eigen::Matrix3Xd& x, const Eigen::VectorXd& residuals, double sampling_radius, double noise,
                  double previous);
double gp_fit_tau(const GainCache& cache, double prior_mean, double sampling_radius, double noise, double previous);

struct GpPrediction {
  double mean = 0.0;      ///< m^3, clamped to [0, prior_mean]
  double variance = 1.0;  ///< in prior-mean-normalised units
};

/// Factorised posterior, immutable once built.
class GpPosterior {
 public:
  GpPosterior() = default;
  GpPosterior(const GainCache& cache, const GpModel& model);

  const GpModel& model() const { return model_; }
  std::size_t size() const { return static_cast<std::size_t>(x_.cols()); }
  bool ok() const { return ok_; }

  GpPrediction predict(const Eigen::Vector3d& p) const;
  double mean(const Eigen::Vector3d& p) const;

 private:
  GpModel model_;
  Eigen::Matrix3Xd x_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  bool ok_ = true;
};

GpPrediction gp_predict(const GainCache& cache, const GpModel& model, const Eigen::Vector3d& p);

}  // namespace bzx
