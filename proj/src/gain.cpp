#include "bzx/gain.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace bzx {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

double fov_volume(const CameraModel& camera) {
  constexpr double kDeg = M_PI / 180.0;
  const double az = camera.horizontal_fov_deg * kDeg;
  const double el = camera.vertical_fov_deg * kDeg;
  const double r3 = std::pow(camera.max_range, 3) - std::pow(camera.min_range, 3);
  return az * 2.0 * std::sin(0.5 * el) / 3.0 * r3;
}

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

YawGain explicit_gain(const OccupancyGrid& map, const Eigen::Vector3d& position, const CameraModel& camera,
                      const GainRayConfig& rays) {
  if (!map.in_bounds(map.index_of(position))) throw std::out_of_range("explicit_gain: position outside map");
  constexpr double kDeg = M_PI / 180.0;
  const int n_bins = std::max(1, static_cast<int>(std::lround(360.0 / rays.azimuth_bin_deg)));
  const double bin_w = 2.0 * M_PI / n_bins;
  const double vfov = camera.vertical_fov_deg * kDeg;
  const int n_el = std::max(1, static_cast<int>(std::lround(camera.vertical_fov_deg / rays.elevation_step_deg)));
  const double el_w = vfov / n_el;
  const double dr = map.resolution() * rays.radial_step_fraction;
  const double r_min = camera.min_range, r_max = camera.max_range;

  YawGain out;
  out.bins.assign(n_bins, 0.0);
  for (int b = 0; b < n_bins; ++b) {
    const double az = -M_PI + b * bin_w;
    double total = 0.0;
    for (int e = 0; e < n_el; ++e) {
      const double lo = -0.5 * vfov + e * el_w;
      const double hi = lo + el_w;
      const double solid = bin_w * (std::sin(hi) - std::sin(lo));
      const double el = 0.5 * (lo + hi);
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      for (double r0 = r_min; r0 < r_max - 1e-12; r0 += dr) {
        const double r1 = std::min(r0 + dr, r_max);
        const VoxelState s = map.at(Eigen::Vector3d(position + 0.5 * (r0 + r1) * dir));
        if (s == VoxelState::Occupied) break;
        if (s == VoxelState::Unknown) total += solid * (r1 * r1 * r1 - r0 * r0 * r0) / 3.0;
      }
    }
    out.bins[b] = total;
  }

  // Windowed sum over the horizontal FoV, fractional at the window edges.
  const double half = 0.5 * camera.horizontal_fov_deg * kDeg;
  out.by_yaw.assign(n_bins, 0.0);
  out.yaws.resize(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    out.yaws[b] = wrap_angle(-M_PI + b * bin_w);
    double g = 0.0;
    for (int j = 0; j < n_bins; ++j) {
      int k = j - b;
      k = ((k % n_bins) + n_bins) % n_bins;
      if (k > n_bins / 2) k -= n_bins;
      const double off = k * bin_w;
      const double overlap = std::min(off + 0.5 * bin_w, half) - std::max(off - 0.5 * bin_w, -half);
      if (overlap > 0.0) g += out.bins[j] * std::min(1.0, overlap / bin_w);
    }
    out.by_yaw[b] = g;
  }

  // Several headings often tie (the unknown region is wider than the FoV); take the middle of
  // the widest run of windows within 0.1% of the best.
  out.best_gain = *std::max_element(out.by_yaw.begin(), out.by_yaw.end());
  const double tie = 1e-3 * out.best_gain;
  auto is_max = [&](int b) { return out.by_yaw[((b % n_bins) + n_bins) % n_bins] >= out.best_gain - tie; };
  int best_start = 0, best_len = 0;
  for (int b = 0; b < n_bins; ++b) {
    if (!is_max(b) || (b > 0 && is_max(b - 1))) continue;
    int len = 0;
    while (len < n_bins && is_max(b + len)) ++len;
    if (len > best_len) {
      best_start = b;
      best_len = len;
    }
  }
  out.best_yaw = best_len >= n_bins ? out.yaws[0] : wrap_angle(-M_PI + (best_start + 0.5 * (best_len - 1)) * bin_w);
  return out;
}

// ---------------------------------------------------------------------------------------------

using RtPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using RtValue = std::pair<RtPoint, std::uint64_t>;

struct GainCache::Index {
  bgi::rtree<RtValue, bgi::rstar<16>> tree;
};

namespace {
RtPoint to_rt(const Eigen::Vector3d& p) { return {p.x(), p.y(), p.z()}; }
}  // namespace

GainCache::GainCache(double min_separation, std::size_t capacity)
    : min_separation_(min_separation), capacity_(capacity), index_(std::make_unique<Index>()) {
  if (!(min_separation >= 0.0)) throw std::invalid_argument("GainCache: negative separation");
  if (capacity == 0) throw std::invalid_argument("GainCache: zero capacity");
}

GainCache::GainCache(const GainCache& o)
    : min_separation_(o.min_separation_),
      capacity_(o.capacity_),
      next_id_(o.next_id_),
      samples_(o.samples_),
      index_(std::make_unique<Index>(*o.index_)) {}

GainCache& GainCache::operator=(const GainCache& o) {
  if (this != &o) {
    min_separation_ = o.min_separation_;
    capacity_ = o.capacity_;
    next_id_ = o.next_id_;
    samples_ = o.samples_;
    index_ = std::make_unique<Index>(*o.index_);
  }
  return *this;
}

GainCache::GainCache(GainCache&&) noexcept = default;
GainCache& GainCache::operator=(GainCache&&) noexcept = default;
GainCache::~GainCache() = default;

std::optional<GainSample> GainCache::nearest(const Eigen::Vector3d& p) const {
  for (auto it = index_->tree.qbegin(bgi::nearest(to_rt(p), 1)); it != index_->tree.qend(); ++it)
    return samples_.at(it->second);
  return std::nullopt;
}

bool GainCache::accepts(const Eigen::Vector3d& p) const {
  const auto n = nearest(p);
  return !n || (n->position - p).norm() >= min_separation_;
}

bool GainCache::insert(GainSample sample) {
  if (!accepts(sample.position)) return false;
  if (samples_.size() >= capacity_) {
    const auto oldest = samples_.begin();
    index_->tree.remove(RtValue(to_rt(oldest->second.position), oldest->first));
    samples_.erase(oldest);
  }
  sample.id = next_id_++;
  index_->tree.insert(RtValue(to_rt(sample.position), sample.id));
  samples_.emplace(sample.id, sample);
  return true;
}

void GainCache::update(std::uint64_t id, double gain, double best_yaw, std::uint64_t stamp) {
  auto& s = samples_.at(id);
  s.gain = gain;
  s.best_yaw = best_yaw;
  s.stamp = stamp;
}

std::vector<std::uint64_t> GainCache::stalest(std::size_t budget, std::uint64_t current) const {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> stale;
  for (const auto& [id, s] : samples_)
    if (s.stamp < current) stale.emplace_back(s.stamp, id);
  std::sort(stale.begin(), stale.end());
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < stale.size() && i < budget; ++i) out.push_back(stale[i].second);
  return out;
}

Eigen::Matrix3Xd GainCache::positions() const {
  Eigen::Matrix3Xd x(3, samples_.size());
  Eigen::Index i = 0;
  for (const auto& [id, s] : samples_) x.col(i++) = s.position;
  return x;
}

Eigen::VectorXd GainCache::gains() const {
  Eigen::VectorXd g(samples_.size());
  Eigen::Index i = 0;
  for (const auto& [id, s] : samples_) g(i++) = s.gain;
  return g;
}

void GainCache::write(std::ostream& out) const {
  out << "# x y z gain best_yaw stamp\n";
  out.precision(17);
  for (const auto& [id, s] : samples_)
    out << s.position.x() << ' ' << s.position.y() << ' ' << s.position.z() << ' ' << s.gain << ' ' << s.best_yaw
        << ' ' << s.stamp << '\n';
}

GainCache GainCache::read(std::istream& in, double min_separation, std::size_t capacity) {
  GainCache cache(min_separation, capacity);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    GainSample s;
    if (!(ls >> s.position.x() >> s.position.y() >> s.position.z() >> s.gain >> s.best_yaw >> s.stamp))
      throw std::runtime_error("GainCache::read: malformed line: " + line);
    cache.insert(s);
  }
  return cache;
}

bool cache_insert(GainCache& cache, const GainSample& sample) { return cache.insert(sample); }

std::size_t cache_reevaluate(GainCache& cache, const OccupancyGrid& map, const CameraModel& camera,
                             const GainRayConfig& rays, std::size_t budget, std::uint64_t stamp) {
  const auto ids = cache.stalest(budget, stamp);
  for (const auto id : ids) {
    const auto& s = cache.samples().at(id);
    const YawGain g = explicit_gain(map, s.position, camera, rays);
    cache.update(id, g.best_gain, g.best_yaw, stamp);
  }
  return ids.size();
}

// ---------------------------------------------------------------------------------------------

Eigen::MatrixXd gram_matrix(const Eigen::Matrix3Xd& x, double length_scale, double noise) {
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0 + noise;
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = se_kernel(x.col(i), x.col(j), length_scale);
  }
  return k;
}

std::optional<double> gp_log_marginal_likelihood(const Eigen::Matrix3Xd& x, const Eigen::VectorXd& y,
                                                 double length_scale, double noise) {
  if (x.cols() == 0) throw std::invalid_argument("gp_log_marginal_likelihood: no samples");
  if (!(length_scale > 0.0)) throw std::invalid_argument("gp_log_marginal_likelihood: length scale must be positive");
  Eigen::LLT<Eigen::MatrixXd> llt(gram_matrix(x, length_scale, noise));
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double log_det_half = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) return std::nullopt;
    log_det_half += std::log(l(i, i));
  }
  const Eigen::VectorXd alpha = llt.solve(y);
  return -0.5 * y.dot(alpha) - log_det_half - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
}

namespace {
Eigen::VectorXd residuals(const GainCache& cache, double prior_mean) {
  return (cache.gains().array() / prior_mean - 1.0).matrix();
}
}  // namespace

std::optional<double> gp_log_marginal_likelihood(const GainCache& cache, double prior_mean, double length_scale,
                                                 double noise) {
  return gp_log_marginal_likelihood(cache.positions(), residuals(cache, prior_mean), length_scale, noise);
}

double gp_fit_tau(const Eigen::Matrix3Xd& x, const Eigen::VectorXd& y, double sampling_radius, double noise,
                  double previous) {
  if (x.cols() < 2) return previous;
  constexpr int kGrid = 25;
  const double lo = 0.1 * sampling_radius, hi = 10.0 * sampling_radius;
  auto tau_at = [&](int i) { return lo * std::pow(hi / lo, static_cast<double>(i) / (kGrid - 1)); };
  auto better = [](double cand, double best) { return cand > best + 1e-12 * std::max(1.0, std::abs(best)); };

  int best_i = -1;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const auto v = gp_log_marginal_likelihood(x, y, tau_at(i), noise);
    if (v && (best_i < 0 || better(*v, best))) {
      best = *v;
      best_i = i;
    }
  }
  if (best_i < 0) return previous;

  // Golden-section refinement in log(tau) around the grid optimum.
  auto f = [&](double log_tau) {
    const auto v = gp_log_marginal_likelihood(x, y, std::exp(log_tau), noise);
    return v ? *v : -std::numeric_limits<double>::infinity();
  };
  double a = std::log(tau_at(std::max(best_i - 1, 0)));
  double b = std::log(tau_at(std::min(best_i + 1, kGrid - 1)));
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > std::log1p(1e-3)) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double refined = 0.5 * (a + b);
  const double fr = f(refined);
  return better(fr, best) ? std::exp(refined) : tau_at(best_i);
}

double gp_fit_tau(const GainCache& cache, double prior_mean, double sampling_radius, double noise, double previous) {
  if (cache.size() < 2) return previous;
  return gp_fit_tau(cache.positions(), residuals(cache, prior_mean), sampling_radius, noise, previous);
}

GpPosterior::GpPosterior(const GainCache& cache, const GpModel& model) : model_(model), x_(cache.positions()) {
  if (!(model.length_scale > 0.0)) throw std::invalid_argument("GpPosterior: length scale must be positive");
  if (x_.cols() == 0) return;
  const Eigen::VectorXd y = residuals(cache, model.prior_mean);
  llt_.compute(gram_matrix(x_, model.length_scale, model.noise));
  if (llt_.info() != Eigen::Success) {
    ok_ = false;
    x_.resize(3, 0);
    return;
  }
  alpha_ = llt_.solve(y);
}

double GpPosterior::mean(const Eigen::Vector3d& p) const {
  double m = 0.0;
  for (Eigen::Index i = 0; i < x_.cols(); ++i) m += alpha_(i) * se_kernel(p, x_.col(i), model_.length_scale);
  return std::clamp(model_.prior_mean * (1.0 + m), 0.0, model_.prior_mean);
}

GpPrediction GpPosterior::predict(const Eigen::Vector3d& p) const {
  if (x_.cols() == 0) return {model_.prior_mean, 1.0};
  Eigen::VectorXd k(x_.cols());
  for (Eigen::Index i = 0; i < x_.cols(); ++i) k(i) = se_kernel(p, x_.col(i), model_.length_scale);
  const double m = k.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(k);
  GpPrediction out;
  out.mean = std::clamp(model_.prior_mean * (1.0 + m), 0.0, model_.prior_mean);
  out.variance = std::max(0.0, 1.0 - v.squaredNorm());
  return out;
}

GpPrediction gp_predict(const GainCache& cache, const GpModel& model, const Eigen::Vector3d& p) {
  return GpPosterior(cache, model).predict(p);
}

}  // namespace bzx
