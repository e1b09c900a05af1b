#pragma once

// Data-parallel inner loops. Each kernel has a plain serial reference and an
// OpenMP version; both produce identical results in identical order.

#include "obsel/noise_model.hpp"
#include "obsel/observability.hpp"
#include "obsel/parallel.hpp"
#include "obsel/posterior.hpp"
#include "obsel/prior.hpp"
#include "obsel/rom.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace obsel {

/// Gains of `candidates` against a frozen noise state; NaN marks a candidate
/// whose expanded covariance would be singular. `readings` is indexed by
/// sensor id, `z_cache` = chol^{-1} L(x).
std::vector<double> sweep_gains_serial(const NoiseState& state, const NoiseCovariance& cov,
                                       std::span<const int> candidates, std::span<const double> readings,
                                       const Eigen::VectorXd& z_cache);
std::vector<double> sweep_gains_parallel(const NoiseState& state, const NoiseCovariance& cov,
                                         std::span<const int> candidates,
                                         std::span<const double> readings,
                                         const Eigen::VectorXd& z_cache);
std::vector<double> sweep_gains(ExecutionPolicy policy, const NoiseState& state,
                                const NoiseCovariance& cov, std::span<const int> candidates,
                                std::span<const double> readings, const Eigen::VectorXd& z_cache);

/// Position of the largest finite gain; ties go to the lowest candidate id.
std::optional<std::size_t> argmax_gain(std::span<const int> candidates, std::span<const double> gains);

/// Observability of one noise state for many hyper-parameters.
/// eig_obs[t] holds L(x_t(U_m)) for the t-th theta.
std::vector<ObservabilityResult> observability_sweep_serial(
    std::span<const Eigen::MatrixXd> eig_obs, std::span<const Eigen::MatrixXd> grams,
    const NoiseState& noise, const GaussianPrior& prior, ObservabilityVariant variant, bool restrict);
std::vector<ObservabilityResult> observability_sweep_parallel(
    std::span<const Eigen::MatrixXd> eig_obs, std::span<const Eigen::MatrixXd> grams,
    const NoiseState& noise, const GaussianPrior& prior, ObservabilityVariant variant, bool restrict);
std::vector<ObservabilityResult> observability_sweep(
    ExecutionPolicy policy, std::span<const Eigen::MatrixXd> eig_obs,
    std::span<const Eigen::MatrixXd> grams, const NoiseState& noise, const GaussianPrior& prior,
    ObservabilityVariant variant, bool restrict);

/// Relative RB error bounds over a training set.
std::vector<RbBatch> rb_bounds_serial(const ReducedBasis& rb, std::span<const Eigen::VectorXd> thetas);
std::vector<RbBatch> rb_bounds_parallel(const ReducedBasis& rb, std::span<const Eigen::VectorXd> thetas);
std::vector<RbBatch> rb_bounds(ExecutionPolicy policy, const ReducedBasis& rb,
                               std::span<const Eigen::VectorXd> thetas);

/// Library-wide quantities shared by every design in an enumeration.
struct DesignInputs {
  Eigen::MatrixXd unit_obs;  // K_L x M, row i = l_i(x_theta(e_m))
  Eigen::MatrixXd eig_obs;   // K_L x M, row i = l_i(x_theta(U_m))
  const NoiseCovariance* cov = nullptr;
  const GaussianPrior* prior = nullptr;
  double sigma2 = 1.0;
};

/// Evaluates one design; empty when its noise covariance is singular.
std::optional<DesignRow> evaluate_design(const DesignInputs& inputs, std::span<const int> ids);

std::vector<std::optional<DesignRow>> evaluate_designs_serial(const DesignInputs& inputs,
                                                              std::span<const std::vector<int>> designs);
std::vector<std::optional<DesignRow>> evaluate_designs_parallel(const DesignInputs& inputs,
                                                                std::span<const std::vector<int>> designs);
std::vector<std::optional<DesignRow>> evaluate_designs(ExecutionPolicy policy, const DesignInputs& inputs,
                                                       std::span<const std::vector<int>> designs);

}  // namespace obsel
