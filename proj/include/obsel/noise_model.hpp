#pragma once

#include <Eigen/Dense>

#include <span>
#include <string_view>
#include <vector>

namespace obsel {

/// One nodal contribution of a linear functional on discrete states.
struct NodeWeight {
  Eigen::Index node = 0;
  double weight = 0.0;
};

/// A sensor is a linear functional on states. Here it is a point evaluation
/// represented as a weighted sum of nodal values.
struct Sensor {
  int id = 0;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();  // (x1 depth axis, x2, x3)
  int site_id = 0;
  std::vector<NodeWeight> stencil;

  double apply(const Eigen::Ref<const Eigen::VectorXd>& state) const;
};

class SensorLibrary {
 public:
  SensorLibrary() = default;
  /// Sensor ids must equal their position in the list.
  explicit SensorLibrary(std::vector<Sensor> sensors);

  const Sensor& at(int id) const;
  std::size_t size() const { return sensors_.size(); }
  bool empty() const { return sensors_.empty(); }
  int site_count() const { return site_count_; }
  std::span<const Sensor> sensors() const { return sensors_; }
  auto begin() const { return sensors_.begin(); }
  auto end() const { return sensors_.end(); }

  /// Dense K x N matrix whose rows are the sensor functionals.
  Eigen::MatrixXd rows(std::span<const int> ids, Eigen::Index dim_state) const;

 private:
  std::vector<Sensor> sensors_;
  int site_count_ = 0;
};

enum class ClampMode {
  paper_verbatim,        // y uses max{h/c, 1} as printed
  spherical_min,         // y uses min{h/c, 1}, otherwise unchanged
  spherical_covariance,  // constant b plus (a - b) times the spherical correlation
};

ClampMode parse_clamp_mode(std::string_view name);
std::string_view to_string(ClampMode mode);

/// Noise covariance cov(l, l~) = a + b - y(h) with h the horizontal distance.
struct VariogramKernel {
  double sill = 2.2054073480730403;    // a
  double nugget = 1.6850672040263555;  // b
  double range = 20.606782733391228;   // c
  double distance_scale = 1.0;         // kernel units per model length unit
  ClampMode clamp_mode = ClampMode::spherical_covariance;

  void validate() const;
  double variogram(double h) const;
  double covariance(double h) const { return sill + nugget - variogram(h); }
};

double horizontal_distance(const Sensor& s1, const Sensor& s2);
double kernel_eval(const VariogramKernel& kernel, const Sensor& s1, const Sensor& s2);

/// Kernel values for a whole library, tabulated once when the library is small
/// enough and evaluated on demand otherwise.
class NoiseCovariance {
 public:
  static constexpr std::size_t kTableLimit = 4096;

  NoiseCovariance(const SensorLibrary& library, VariogramKernel kernel);

  double operator()(int i, int j) const;
  const VariogramKernel& kernel() const { return kernel_; }
  const SensorLibrary& library() const { return *library_; }
  Eigen::MatrixXd matrix(std::span<const int> ids) const;

 private:
  const SensorLibrary* library_;
  VariogramKernel kernel_;
  Eigen::MatrixXd table_;
};

/// Selected observation operator with its noise covariance and lower Cholesky
/// factor. The total noise covariance is sigma2 * cov.
class NoiseState {
 public:
  NoiseState() = default;
  explicit NoiseState(double sigma2);
  /// Factorizes a full covariance at once, sensors in the order of its rows.
  NoiseState(std::vector<Sensor> sensors, Eigen::MatrixXd cov, double sigma2 = 1.0);

  Eigen::Index size() const { return static_cast<Eigen::Index>(sensors_.size()); }
  bool empty() const { return sensors_.empty(); }
  double sigma2() const { return sigma2_; }
  std::span<const Sensor> sensors() const { return sensors_; }
  std::vector<int> ids() const;
  bool contains(int id) const;
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::MatrixXd& chol() const { return chol_; }

  /// chol^{-1} * rhs
  Eigen::VectorXd whiten(const Eigen::Ref<const Eigen::VectorXd>& rhs) const;
  Eigen::MatrixXd whiten_many(const Eigen::Ref<const Eigen::MatrixXd>& rhs) const;

  /// Borders cov by (v, s) and chol by (chol^{-1} v, sqrt(s - w'w)).
  /// Single-writer variant of cholesky_expand.
  void expand(const Sensor& sensor, const Eigen::Ref<const Eigen::VectorXd>& cross_cov,
              double self_cov);
  /// Bordered copy, writing each entry of the new factors once.
  NoiseState expanded(const Sensor& sensor, const Eigen::Ref<const Eigen::VectorXd>& cross_cov,
                      double self_cov) const;

  /// Observations of a state by every selected sensor, in selection order.
  Eigen::VectorXd observe(const Eigen::Ref<const Eigen::VectorXd>& state) const;

 private:
  std::vector<Sensor> sensors_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  double sigma2_ = 1.0;
};

/// Relative floor on the Schur complement s - w'w.
inline constexpr double kSpdFloor = 1e-12;

NoiseState cholesky_expand(const NoiseState& state, const VariogramKernel& kernel,
                           const Sensor& new_sensor);
NoiseState cholesky_expand(const NoiseState& state, const NoiseCovariance& cov, int new_id);

/// d' cov^{-1} d by one triangular solve.
double observation_norm_sq(const NoiseState& state, const Eigen::Ref<const Eigen::VectorXd>& d);

/// Increase of the noise-weighted observation norm of a state when `candidate`
/// is appended. z_cache = chol^{-1} L(x) is prepared once per (state, x).
double observability_gain(const NoiseState& state, const VariogramKernel& kernel,
                          const Sensor& candidate, double candidate_reading,
                          const Eigen::Ref<const Eigen::VectorXd>& z_cache);
double observability_gain(const NoiseState& state, const NoiseCovariance& cov, int candidate_id,
                          double candidate_reading,
                          const Eigen::Ref<const Eigen::VectorXd>& z_cache);

}  // namespace obsel
