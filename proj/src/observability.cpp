#include "obsel/observability.hpp"

#include "obsel/errors.hpp"
#include "obsel/linalg.hpp"
#include "obsel/rom.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace obsel {

ObservabilityResult observability_from_whitened(const Eigen::MatrixXd& whitened_eig_obs,
                                                const GaussianPrior& prior, const Eigen::MatrixXd& eig_gram,
                                                ObservabilityVariant variant, bool restrict) {
  const Eigen::Index k = whitened_eig_obs.rows();
  const Eigen::Index m = prior.dim();
  if (k == 0) throw NoSensors("observability needs at least one sensor");
  if (whitened_eig_obs.cols() != m) throw DimensionMismatch("observation columns differ from prior dimension");
  if (variant == ObservabilityVariant::alpha_W && (eig_gram.rows() != m || eig_gram.cols() != m))
    throw DimensionMismatch("state Gram matrix size");

  const Eigen::Index r = restrict ? std::min(k, m) : m;
  const Eigen::MatrixXd w = whitened_eig_obs.leftCols(r);
  const Eigen::MatrixXd rhs = variant == ObservabilityVariant::beta_G
                                  ? Eigen::MatrixXd(prior.eigenvalues().head(r).cwiseInverse().asDiagonal())
                                  : Eigen::MatrixXd(eig_gram.topLeftCorner(r, r));
  const auto eig = gram_generalized_eigen(w, rhs);

  ObservabilityResult out;
  out.variant = variant;
  out.restricted_dim = r;
  out.beta = (!restrict && k < m) ? 0.0 : std::sqrt(std::max(eig.values(0), 0.0));

  Eigen::VectorXd c = eig.vectors.col(0);
  Eigen::Index lead = 0;
  c.cwiseAbs().maxCoeff(&lead);
  if (c(lead) < 0.0) c = -c;
  out.worst_coefficients = Eigen::VectorXd::Zero(m);
  out.worst_coefficients.head(r) = c;
  out.worst_u = prior.eigenvectors() * out.worst_coefficients;
  return out;
}

ObservabilityResult observability_from_observations(const Eigen::MatrixXd& eig_obs,
                                                    const NoiseState& noise,
                                                    const GaussianPrior& prior,
                                                    const Eigen::MatrixXd& eig_gram,
                                                    ObservabilityVariant variant, bool restrict) {
  if (noise.empty()) throw NoSensors("observability needs at least one sensor");
  return observability_from_whitened(noise.whiten_many(eig_obs), prior, eig_gram, variant, restrict);
}

PriorStates full_order_prior_states(const AffineModel& model,
                                    const Eigen::Ref<const Eigen::VectorXd>& theta,
                                    const GaussianPrior& prior) {
  PriorStates out;
  out.states = FullOrderSolver(model, theta).solve_many(prior.eigenvectors());
  out.gram = out.states.transpose() * (model.x_inner * out.states);
  return out;
}

PriorStates reduced_prior_states(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                 const GaussianPrior& prior) {
  PriorStates out;
  out.states = rb_solve_batch(rb, theta, prior.eigenvectors()).coefficients;
  out.gram = out.states.transpose() * out.states;
  out.surrogate = true;
  return out;
}

Eigen::MatrixXd observe_prior_states(const PriorStates& states, const NoiseState& noise,
                                     const ReducedBasis* rb) {
  if (states.surrogate && rb == nullptr) throw ConfigInvalid("surrogate states need a reduced basis");
  Eigen::MatrixXd out(noise.size(), states.states.cols());
  for (Eigen::Index i = 0; i < noise.size(); ++i) {
    const Sensor& s = noise.sensors()[static_cast<std::size_t>(i)];
    if (states.surrogate)
      out.row(i) = rb->project_sensor(s) * states.states;
    else
      for (Eigen::Index c = 0; c < states.states.cols(); ++c) out(i, c) = s.apply(states.states.col(c));
  }
  return out;
}

ObservabilityResult observability(const AffineModel& model, const ReducedBasis* rb,
                                  const NoiseState& noise, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                  const GaussianPrior& prior, ObservabilityVariant variant,
                                  bool use_surrogate, bool restrict) {
  if (noise.empty()) throw NoSensors("observability needs at least one sensor");
  if (use_surrogate && rb == nullptr) throw ConfigInvalid("surrogate observability without a reduced basis");
  const PriorStates states =
      use_surrogate ? reduced_prior_states(*rb, theta, prior) : full_order_prior_states(model, theta, prior);
  auto out = observability_from_observations(observe_prior_states(states, noise, rb), noise, prior,
                                             states.gram, variant, restrict);
  out.used_surrogate = use_surrogate;
  return out;
}

double continuity_constant(const AffineModel& model, const NoiseState& noise) {
  if (noise.empty()) return 0.0;
  if (!model.x_factor) throw InvariantViolation("state inner product is not factorized");
  Eigen::MatrixXd rows(noise.size(), model.dim_state());
  rows.setZero();
  for (Eigen::Index i = 0; i < noise.size(); ++i)
    for (const auto& nw : noise.sensors()[static_cast<std::size_t>(i)].stencil) rows(i, nw.node) += nw.weight;
  const Eigen::MatrixXd riesz = model.x_factor->solve(Eigen::MatrixXd(rows.transpose()));
  const Eigen::MatrixXd dual_gram = rows * riesz;
  Eigen::MatrixXd whitened = noise.whiten_many(Eigen::MatrixXd(noise.whiten_many(dual_gram).transpose()));
  whitened = 0.5 * (whitened + whitened.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(whitened, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw EigenFailure("continuity constant");
  return std::sqrt(std::max(eig.eigenvalues()(noise.size() - 1), 0.0));
}

}  // namespace obsel
