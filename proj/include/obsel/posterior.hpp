#pragma once

#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/parallel.hpp"
#include "obsel/prior.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace obsel {

struct PosteriorSummary {
  Eigen::MatrixXd cov_post;
  Eigen::VectorXd eigenvalues;  // descending
  double trace = 0.0;           // A criterion
  double logdet = 0.0;          // log of the D criterion
  double lambda_max = 0.0;      // E criterion
  double beta = 0.0;            // inf_u ||G u||_noise / ||u||_pr, zero if K < M

  double det() const;
};

/// Column m = observations of x_theta(e_m) by the sensors in `subset`.
Eigen::MatrixXd assemble_G(const AffineModel& model, const SensorLibrary& library,
                           std::span<const int> subset, const Eigen::Ref<const Eigen::VectorXd>& theta);

/// (G' Sigma^{-1} G / sigma2 + Sigma_pr^{-1})^{-1} via triangular solves with
/// the noise factor. K = 0 returns the prior.
PosteriorSummary posterior_covariance(const Eigen::MatrixXd& G, const NoiseState& noise,
                                      const GaussianPrior& prior);
/// Same, from W = chol^{-1} G.
PosteriorSummary posterior_from_whitened(const Eigen::MatrixXd& whitened_G, double sigma2,
                                         const GaussianPrior& prior);

Eigen::VectorXd posterior_mean(const Eigen::MatrixXd& G, const NoiseState& noise,
                               const GaussianPrior& prior, const Eigen::Ref<const Eigen::VectorXd>& d);

enum class Restriction { none, one_per_site };
Restriction parse_restriction(std::string_view name);
std::string_view to_string(Restriction r);

bool admissible(const SensorLibrary& library, std::span<const int> ids, Restriction restriction);

struct DesignRow {
  std::vector<int> ids;  // ascending
  double trace = 0.0;
  double logdet = 0.0;
  double lambda_max = 0.0;
  double beta = 0.0;  // observability with parameter restriction when k < M
};

struct DesignTable {
  std::vector<DesignRow> rows;  // lexicographic by sensor ids
  std::size_t argmin_trace = 0;
  std::size_t argmin_logdet = 0;
  std::size_t argmin_lambda_max = 0;
  std::size_t argmax_beta = 0;
  std::uint64_t singular_skipped = 0;
};

struct EnumerationOptions {
  int k = 1;
  Restriction restriction = Restriction::none;
  double cap = 2e6;
  double sigma2 = 1.0;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
};

/// Binomial coefficient as a double (exact below 2^53).
double combination_count(std::size_t n, std::size_t k);

/// All k-subsets in lexicographic order that pass the restriction.
std::vector<std::vector<int>> admissible_combinations(const SensorLibrary& library, int k,
                                                      Restriction restriction, double cap);

DesignTable enumerate_designs(const AffineModel& model, const SensorLibrary& library,
                              const NoiseCovariance& cov, const GaussianPrior& prior,
                              const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const EnumerationOptions& options);

enum class Criterion { trace, logdet, lambda_max, beta };
Criterion parse_criterion(std::string_view name);
std::string_view to_string(Criterion c);
double criterion_value(const DesignRow& row, Criterion c);
/// `count` random admissible designs (ids ascending): distinct sites first,
/// then one sensor per site under one_per_site.
std::vector<std::vector<int>> random_designs(const SensorLibrary& library, int k, Restriction restriction,
                                             std::size_t count, std::uint64_t seed);

/// Smaller is better except for beta.
bool better(Criterion c, double lhs, double rhs);

/// Fraction of rows strictly better than the design `ids`.
double percentile_rank(const DesignTable& table, std::span<const int> ids, Criterion criterion);

/// Spearman correlation with average ranks for ties.
double rank_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace obsel
