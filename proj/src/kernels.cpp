#include "obsel/kernels.hpp"

#include "obsel/errors.hpp"

#include <cmath>
#include <exception>
#include <limits>

namespace obsel {

namespace {

/// Runs body(i) for i < n on the OpenMP team. The exception of the lowest
/// failing index is rethrown after the loop, as a serial loop would.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double gain_or_nan(const NoiseState& state, const NoiseCovariance& cov, int id,
                   std::span<const double> readings, const Eigen::VectorXd& z_cache) {
  try {
    return observability_gain(state, cov, id, readings[static_cast<std::size_t>(id)], z_cache);
  } catch (const NearSingular&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

Eigen::MatrixXd gram_or_empty(std::span<const Eigen::MatrixXd> grams, std::size_t t) {
  return grams.empty() ? Eigen::MatrixXd() : grams[t];
}

}  // namespace

std::vector<double> sweep_gains_serial(const NoiseState& state, const NoiseCovariance& cov,
                                       std::span<const int> candidates, std::span<const double> readings,
                                       const Eigen::VectorXd& z_cache) {
  std::vector<double> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    out[i] = gain_or_nan(state, cov, candidates[i], readings, z_cache);
  return out;
}

std::vector<double> sweep_gains_parallel(const NoiseState& state, const NoiseCovariance& cov,
                                         std::span<const int> candidates,
                                         std::span<const double> readings,
                                         const Eigen::VectorXd& z_cache) {
  std::vector<double> out(candidates.size());
  parallel_for(candidates.size(),
               [&](std::size_t i) { out[i] = gain_or_nan(state, cov, candidates[i], readings, z_cache); });
  return out;
}

std::vector<double> sweep_gains(ExecutionPolicy policy, const NoiseState& state,
                                const NoiseCovariance& cov, std::span<const int> candidates,
                                std::span<const double> readings, const Eigen::VectorXd& z_cache) {
  return policy == ExecutionPolicy::serial ? sweep_gains_serial(state, cov, candidates, readings, z_cache)
                                           : sweep_gains_parallel(state, cov, candidates, readings, z_cache);
}

std::optional<std::size_t> argmax_gain(std::span<const int> candidates, std::span<const double> gains) {
  if (candidates.size() != gains.size()) throw DimensionMismatch("candidates and gains differ in length");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    if (std::isnan(gains[i])) continue;
    if (!best || gains[i] > gains[*best] ||
        (gains[i] == gains[*best] && candidates[i] < candidates[*best]))
      best = i;
  }
  return best;
}

std::vector<ObservabilityResult> observability_sweep_serial(
    std::span<const Eigen::MatrixXd> eig_obs, std::span<const Eigen::MatrixXd> grams,
    const NoiseState& noise, const GaussianPrior& prior, ObservabilityVariant variant, bool restrict) {
  std::vector<ObservabilityResult> out(eig_obs.size());
  for (std::size_t t = 0; t < eig_obs.size(); ++t)
    out[t] = observability_from_observations(eig_obs[t], noise, prior, gram_or_empty(grams, t), variant,
                                             restrict);
  return out;
}

std::vector<ObservabilityResult> observability_sweep_parallel(
    std::span<const Eigen::MatrixXd> eig_obs, std::span<const Eigen::MatrixXd> grams,
    const NoiseState& noise, const GaussianPrior& prior, ObservabilityVariant variant, bool restrict) {
  std::vector<ObservabilityResult> out(eig_obs.size());
  parallel_for(eig_obs.size(), [&](std::size_t t) {
    out[t] = observability_from_observations(eig_obs[t], noise, prior, gram_or_empty(grams, t), variant,
                                             restrict);
  });
  return out;
}

std::vector<ObservabilityResult> observability_sweep(
    ExecutionPolicy policy, std::span<const Eigen::MatrixXd> eig_obs,
    std::span<const Eigen::MatrixXd> grams, const NoiseState& noise, const GaussianPrior& prior,
    ObservabilityVariant variant, bool restrict) {
  return policy == ExecutionPolicy::serial
             ? observability_sweep_serial(eig_obs, grams, noise, prior, variant, restrict)
             : observability_sweep_parallel(eig_obs, grams, noise, prior, variant, restrict);
}

std::vector<RbBatch> rb_bounds_serial(const ReducedBasis& rb, std::span<const Eigen::VectorXd> thetas) {
  const Eigen::MatrixXd none(rb.dim_param(), 0);
  std::vector<RbBatch> out(thetas.size());
  for (std::size_t t = 0; t < thetas.size(); ++t) out[t] = rb_solve_batch(rb, thetas[t], none);
  return out;
}

std::vector<RbBatch> rb_bounds_parallel(const ReducedBasis& rb, std::span<const Eigen::VectorXd> thetas) {
  const Eigen::MatrixXd none(rb.dim_param(), 0);
  std::vector<RbBatch> out(thetas.size());
  parallel_for(thetas.size(), [&](std::size_t t) { out[t] = rb_solve_batch(rb, thetas[t], none); });
  return out;
}

std::vector<RbBatch> rb_bounds(ExecutionPolicy policy, const ReducedBasis& rb,
                               std::span<const Eigen::VectorXd> thetas) {
  return policy == ExecutionPolicy::serial ? rb_bounds_serial(rb, thetas) : rb_bounds_parallel(rb, thetas);
}

std::optional<DesignRow> evaluate_design(const DesignInputs& inputs, std::span<const int> ids) {
  NoiseState noise(inputs.sigma2);
  const auto k = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd unit(k, inputs.unit_obs.cols());
  Eigen::MatrixXd eig(k, inputs.eig_obs.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    Eigen::VectorXd cross(i);
    for (Eigen::Index j = 0; j < i; ++j) cross(j) = (*inputs.cov)(ids[static_cast<std::size_t>(j)], id);
    try {
      noise.expand(inputs.cov->library().at(id), cross, (*inputs.cov)(id, id));
    } catch (const NearSingular&) {
      return std::nullopt;
    }
    unit.row(i) = inputs.unit_obs.row(id);
    eig.row(i) = inputs.eig_obs.row(id);
  }
  const PosteriorSummary summary = posterior_from_whitened(noise.whiten_many(unit), inputs.sigma2, *inputs.prior);
  DesignRow row;
  row.ids.assign(ids.begin(), ids.end());
  row.trace = summary.trace;
  row.logdet = summary.logdet;
  row.lambda_max = summary.lambda_max;
  row.beta = observability_from_whitened(noise.whiten_many(eig), *inputs.prior, Eigen::MatrixXd(),
                                         ObservabilityVariant::beta_G, true)
                 .beta;
  return row;
}

std::vector<std::optional<DesignRow>> evaluate_designs_serial(const DesignInputs& inputs,
                                                              std::span<const std::vector<int>> designs) {
  std::vector<std::optional<DesignRow>> out(designs.size());
  for (std::size_t i = 0; i < designs.size(); ++i) out[i] = evaluate_design(inputs, designs[i]);
  return out;
}

std::vector<std::optional<DesignRow>> evaluate_designs_parallel(const DesignInputs& inputs,
                                                                std::span<const std::vector<int>> designs) {
  std::vector<std::optional<DesignRow>> out(designs.size());
  parallel_for(designs.size(), [&](std::size_t i) { out[i] = evaluate_design(inputs, designs[i]); });
  return out;
}

std::vector<std::optional<DesignRow>> evaluate_designs(ExecutionPolicy policy, const DesignInputs& inputs,
                                                       std::span<const std::vector<int>> designs) {
  return policy == ExecutionPolicy::serial ? evaluate_designs_serial(inputs, designs)
                                           : evaluate_designs_parallel(inputs, designs);
}

}  // namespace obsel
