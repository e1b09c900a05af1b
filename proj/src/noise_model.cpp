#include "obsel/noise_model.hpp"

#include "obsel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace obsel {

double Sensor::apply(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  double value = 0.0;
  for (const auto& nw : stencil) value += nw.weight * state(nw.node);
  return value;
}

SensorLibrary::SensorLibrary(std::vector<Sensor> sensors) : sensors_(std::move(sensors)) {
  std::set<int> sites;
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    if (sensors_[i].id != static_cast<int>(i))
      throw ConfigInvalid("sensor id " + std::to_string(sensors_[i].id) + " at position " +
                          std::to_string(i));
    sites.insert(sensors_[i].site_id);
  }
  site_count_ = static_cast<int>(sites.size());
}

const Sensor& SensorLibrary::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= sensors_.size())
    throw UnknownSensor("id " + std::to_string(id) + " not in library of size " +
                        std::to_string(sensors_.size()));
  return sensors_[static_cast<std::size_t>(id)];
}

Eigen::MatrixXd SensorLibrary::rows(std::span<const int> ids, Eigen::Index dim_state) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ids.size()), dim_state);
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (const auto& nw : at(ids[r]).stencil) out(static_cast<Eigen::Index>(r), nw.node) += nw.weight;
  return out;
}

ClampMode parse_clamp_mode(std::string_view name) {
  if (name == "paper_verbatim") return ClampMode::paper_verbatim;
  if (name == "spherical_min") return ClampMode::spherical_min;
  if (name == "spherical_covariance") return ClampMode::spherical_covariance;
  throw ConfigInvalid("unknown clamp_mode '" + std::string(name) + "'");
}

std::string_view to_string(ClampMode mode) {
  switch (mode) {
    case ClampMode::paper_verbatim: return "paper_verbatim";
    case ClampMode::spherical_min: return "spherical_min";
    case ClampMode::spherical_covariance: return "spherical_covariance";
  }
  return "?";
}

void VariogramKernel::validate() const {
  if (!(sill > 0.0) || !(nugget > 0.0) || !(range > 0.0) || !(distance_scale > 0.0))
    throw ConfigInvalid("variogram sill, nugget, range and distance_scale must be positive");
}

double VariogramKernel::variogram(double h) const {
  const double a = sill;
  const double b = nugget;
  const double ratio = h / range;
  switch (clamp_mode) {
    case ClampMode::paper_verbatim: {
      const double t = std::max(ratio, 1.0);
      return a + (b - a) * (1.5 * t - 0.5 * t * t * t);
    }
    case ClampMode::spherical_min: {
      const double t = std::min(ratio, 1.0);
      return a + (b - a) * (1.5 * t - 0.5 * t * t * t);
    }
    case ClampMode::spherical_covariance: {
      const double t = std::min(ratio, 1.0);
      return b + (a - b) * (1.5 * t - 0.5 * t * t * t);
    }
  }
  return 0.0;
}

double horizontal_distance(const Sensor& s1, const Sensor& s2) {
  const double d2 = s1.location.y() - s2.location.y();
  const double d3 = s1.location.z() - s2.location.z();
  return std::sqrt(d2 * d2 + d3 * d3);
}

double kernel_eval(const VariogramKernel& kernel, const Sensor& s1, const Sensor& s2) {
  return kernel.covariance(kernel.distance_scale * horizontal_distance(s1, s2));
}

NoiseCovariance::NoiseCovariance(const SensorLibrary& library, VariogramKernel kernel)
    : library_(&library), kernel_(kernel) {
  kernel_.validate();
  const auto n = static_cast<Eigen::Index>(library.size());
  if (library.size() <= kTableLimit) {
    table_.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = j; i < n; ++i) {
        const double value = kernel_eval(kernel_, library.at(static_cast<int>(i)),
                                         library.at(static_cast<int>(j)));
        table_(i, j) = value;
        table_(j, i) = value;
      }
  }
}

double NoiseCovariance::operator()(int i, int j) const {
  if (table_.size() > 0) return table_(i, j);
  return kernel_eval(kernel_, library_->at(i), library_->at(j));
}

Eigen::MatrixXd NoiseCovariance::matrix(std::span<const int> ids) const {
  const auto k = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < k; ++i)
      out(i, j) = (*this)(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  return out;
}

NoiseState::NoiseState(double sigma2) : sigma2_(sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigInvalid("sigma2 must be positive");
}

NoiseState::NoiseState(std::vector<Sensor> sensors, Eigen::MatrixXd cov, double sigma2)
    : NoiseState(sigma2) {
  if (cov.rows() != cov.cols() || cov.rows() != static_cast<Eigen::Index>(sensors.size()))
    throw DimensionMismatch("covariance does not match the sensor count");
  for (std::size_t i = 0; i < sensors.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (sensors[i].id == sensors[j].id)
        throw ConfigInvalid("sensor " + std::to_string(sensors[i].id) + " listed twice");
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NearSingular("covariance is not positive definite");
  chol_ = llt.matrixL();
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    if (!(chol_(i, i) * chol_(i, i) > kSpdFloor * cov(i, i)))
      throw NearSingular("pivot " + std::to_string(i) + " below the floor");
  cov_ = std::move(cov);
  sensors_ = std::move(sensors);
}

std::vector<int> NoiseState::ids() const {
  std::vector<int> out;
  out.reserve(sensors_.size());
  for (const auto& s : sensors_) out.push_back(s.id);
  return out;
}

bool NoiseState::contains(int id) const {
  return std::any_of(sensors_.begin(), sensors_.end(), [id](const Sensor& s) { return s.id == id; });
}

Eigen::VectorXd NoiseState::whiten(const Eigen::Ref<const Eigen::VectorXd>& rhs) const {
  if (rhs.size() != size())
    throw DimensionMismatch("vector of length " + std::to_string(rhs.size()) + " for " +
                            std::to_string(size()) + " sensors");
  if (empty()) return Eigen::VectorXd();
  return chol_.triangularView<Eigen::Lower>().solve(rhs);
}

Eigen::MatrixXd NoiseState::whiten_many(const Eigen::Ref<const Eigen::MatrixXd>& rhs) const {
  if (rhs.rows() != size())
    throw DimensionMismatch("matrix with " + std::to_string(rhs.rows()) + " rows for " +
                            std::to_string(size()) + " sensors");
  if (empty()) return Eigen::MatrixXd(0, rhs.cols());
  return chol_.triangularView<Eigen::Lower>().solve(rhs);
}

NoiseState NoiseState::expanded(const Sensor& sensor, const Eigen::Ref<const Eigen::VectorXd>& cross_cov,
                                double self_cov) const {
  const Eigen::Index k = size();
  if (cross_cov.size() != k) throw DimensionMismatch("cross covariance length");
  if (contains(sensor.id)) throw ConfigInvalid("sensor " + std::to_string(sensor.id) + " already selected");

  Eigen::VectorXd w = k > 0 ? whiten(cross_cov) : Eigen::VectorXd();
  const double schur = self_cov - (k > 0 ? w.squaredNorm() : 0.0);
  if (!(schur > kSpdFloor * std::abs(self_cov)))
    throw NearSingular("Schur complement " + std::to_string(schur) + " for sensor " +
                       std::to_string(sensor.id));

  NoiseState out(sigma2_);
  out.sensors_.reserve(sensors_.size() + 1);
  out.sensors_ = sensors_;
  out.sensors_.push_back(sensor);
  out.cov_.resize(k + 1, k + 1);
  out.chol_.resize(k + 1, k + 1);
  out.cov_.topLeftCorner(k, k) = cov_;
  out.chol_.topLeftCorner(k, k) = chol_;
  out.cov_.col(k).head(k) = cross_cov;
  out.cov_.row(k).head(k) = cross_cov.transpose();
  out.chol_.col(k).head(k).setZero();
  out.chol_.row(k).head(k) = w.transpose();
  out.cov_(k, k) = self_cov;
  out.chol_(k, k) = std::sqrt(schur);
  return out;
}

void NoiseState::expand(const Sensor& sensor, const Eigen::Ref<const Eigen::VectorXd>& cross_cov,
                        double self_cov) {
  *this = expanded(sensor, cross_cov, self_cov);
}

Eigen::VectorXd NoiseState::observe(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  Eigen::VectorXd d(size());
  for (Eigen::Index i = 0; i < size(); ++i) d(i) = sensors_[static_cast<std::size_t>(i)].apply(state);
  return d;
}

NoiseState cholesky_expand(const NoiseState& state, const VariogramKernel& kernel,
                           const Sensor& new_sensor) {
  Eigen::VectorXd v(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    v(i) = kernel_eval(kernel, state.sensors()[static_cast<std::size_t>(i)], new_sensor);
  return state.expanded(new_sensor, v, kernel_eval(kernel, new_sensor, new_sensor));
}

NoiseState cholesky_expand(const NoiseState& state, const NoiseCovariance& cov, int new_id) {
  Eigen::VectorXd v(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    v(i) = cov(state.sensors()[static_cast<std::size_t>(i)].id, new_id);
  return state.expanded(cov.library().at(new_id), v, cov(new_id, new_id));
}

double observation_norm_sq(const NoiseState& state, const Eigen::Ref<const Eigen::VectorXd>& d) {
  if (d.size() != state.size())
    throw DimensionMismatch("observation of length " + std::to_string(d.size()) + " for " +
                            std::to_string(state.size()) + " sensors");
  if (state.empty()) return 0.0;
  return state.whiten(d).squaredNorm();
}

namespace {

double gain_from_cross_cov(const NoiseState& state, const Eigen::VectorXd& v, double s,
                           double reading, const Eigen::Ref<const Eigen::VectorXd>& z, int id) {
  double wz = 0.0;
  double ww = 0.0;
  if (state.size() > 0) {
    if (z.size() != state.size()) throw DimensionMismatch("z_cache length");
    const Eigen::VectorXd w = state.chol().triangularView<Eigen::Lower>().solve(v);
    wz = w.dot(z);
    ww = w.squaredNorm();
  }
  const double denom = s - ww;
  if (!(denom > kSpdFloor * std::abs(s)))
    throw NearSingular("Schur complement " + std::to_string(denom) + " for candidate " +
                       std::to_string(id));
  const double r = reading - wz;
  return r * r / denom;
}

}  // namespace

double observability_gain(const NoiseState& state, const VariogramKernel& kernel,
                          const Sensor& candidate, double candidate_reading,
                          const Eigen::Ref<const Eigen::VectorXd>& z_cache) {
  Eigen::VectorXd v(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    v(i) = kernel_eval(kernel, state.sensors()[static_cast<std::size_t>(i)], candidate);
  return gain_from_cross_cov(state, v, kernel_eval(kernel, candidate, candidate), candidate_reading,
                             z_cache, candidate.id);
}

double observability_gain(const NoiseState& state, const NoiseCovariance& cov, int candidate_id,
                          double candidate_reading,
                          const Eigen::Ref<const Eigen::VectorXd>& z_cache) {
  Eigen::VectorXd v(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    v(i) = cov(state.sensors()[static_cast<std::size_t>(i)].id, candidate_id);
  return gain_from_cross_cov(state, v, cov(candidate_id, candidate_id), candidate_reading, z_cache,
                             candidate_id);
}

}  // namespace obsel
