#pragma once

#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/prior.hpp"

#include <Eigen/Dense>

namespace obsel {

struct ReducedBasis;

enum class ObservabilityVariant {
  beta_G,   // inf over u of ||G u||_noise / ||u||_pr
  alpha_W,  // inf over achievable states of ||L x||_noise / ||x||_X
};

struct ObservabilityResult {
  double beta = 0.0;
  Eigen::VectorXd worst_u;             // in parameter coordinates, zero-padded
  Eigen::VectorXd worst_coefficients;  // in prior eigenvector coordinates
  ObservabilityVariant variant = ObservabilityVariant::beta_G;
  bool used_surrogate = false;
  Eigen::Index restricted_dim = 0;
};

/// Core of the computation once the observations are available.
///
/// `eig_obs` is K x M with column m holding L(x_theta(U_m)) for the m-th prior
/// eigenvector. `eig_gram` holds <x_theta(U_i), x_theta(U_j)>_X and is only
/// read for alpha_W. With `restrict` the problem is posed on the leading
/// min{K, M} prior eigenvectors; without it beta is zero whenever K < M.
///
/// The minimal eigenpair of (W'W) c = mu R c with W = chol^{-1} eig_obs and
/// R = diag(1/lambda) (beta_G) or eig_gram (alpha_W) yields beta = sqrt(mu)
/// and the worst-case direction sum_m c_m U_m. The pencil is solved through
/// the SVD of W R^{-T/2}, never forming W'W. Under a repeated minimal
/// eigenvalue the solver's first vector is returned.
ObservabilityResult observability_from_observations(const Eigen::MatrixXd& eig_obs,
                                                    const NoiseState& noise,
                                                    const GaussianPrior& prior,
                                                    const Eigen::MatrixXd& eig_gram,
                                                    ObservabilityVariant variant, bool restrict = true);

/// Same with the observations already whitened, W = chol^{-1} eig_obs.
ObservabilityResult observability_from_whitened(const Eigen::MatrixXd& whitened_eig_obs,
                                                const GaussianPrior& prior, const Eigen::MatrixXd& eig_gram,
                                                ObservabilityVariant variant, bool restrict = true);

/// States x_theta(U_m) for every prior eigenvector, full-order or reduced.
/// Column m of `states` is a nodal vector (full order) or RB coefficients.
struct PriorStates {
  Eigen::MatrixXd states;
  Eigen::MatrixXd gram;  // X-Gram of the states
  bool surrogate = false;
};

PriorStates full_order_prior_states(const AffineModel& model,
                                    const Eigen::Ref<const Eigen::VectorXd>& theta,
                                    const GaussianPrior& prior);
PriorStates reduced_prior_states(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                 const GaussianPrior& prior);

/// L(x_theta(U_m)) for the sensors in `noise`.
Eigen::MatrixXd observe_prior_states(const PriorStates& states, const NoiseState& noise,
                                     const ReducedBasis* rb);

ObservabilityResult observability(const AffineModel& model, const ReducedBasis* rb,
                                  const NoiseState& noise, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                  const GaussianPrior& prior, ObservabilityVariant variant,
                                  bool use_surrogate, bool restrict = true);

/// gamma_L = sup_x ||L x||_noise / ||x||_X, the largest singular value of
/// chol^{-1} L against the state inner product.
double continuity_constant(const AffineModel& model, const NoiseState& noise);

}  // namespace obsel
