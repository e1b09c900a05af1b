#pragma once

#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/parallel.hpp"
#include "obsel/prior.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <vector>

namespace obsel {

/// Galerkin reduced basis of an AffineModel with a residual error bound.
///
/// The residual of a reduced solution c at (theta, u) is
///   r = B u - sum_q theta_q A_q V c   (theta_0 = 1),
/// a combination of the columns [B, A_0 v_1, ..., A_P v_1, A_0 v_2, ...].
/// Their Riesz representers are stored as the triangular factor of a thin QR
/// in the X-inner product, so ||r||_{X'} = ||R coeff|| without cancellation.
struct ReducedBasis {
  Eigen::MatrixXd basis;                      // N x n, X-orthonormal columns
  std::vector<Eigen::MatrixXd> reduced_terms;  // V' A_q V
  Eigen::MatrixXd reduced_rhs;                // V' B
  Eigen::MatrixXd residual_factor;            // R, (M + (P+1) n) columns
  Eigen::VectorXd x_inner_theta;              // X = A(x_inner_theta)
  bool has_constant_term = false;             // A_0 != 0
  double tolerance = 0.0;
  double achieved = 0.0;  // max relative bound over the training set

  Eigen::Index size() const { return basis.cols(); }
  Eigen::Index dim_state() const { return basis.rows(); }
  Eigen::Index dim_param() const { return reduced_rhs.cols(); }
  Eigen::Index dim_theta() const { return static_cast<Eigen::Index>(reduced_terms.size()) - 1; }

  Eigen::MatrixXd assemble(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  /// Rows l' V for a sensor functional.
  Eigen::RowVectorXd project_sensor(const Sensor& sensor) const;
  Eigen::VectorXd reconstruct(const Eigen::Ref<const Eigen::VectorXd>& coefficients) const {
    return basis * coefficients;
  }
};

/// For conduction operators with A_0 >= 0 and A_q >= 0, A(theta) dominates
/// min_q theta_q / x_inner_theta_q times the X-inner product, capped at 1
/// when A_0 is part of X.
double coercivity_lower_bound(const Eigen::Ref<const Eigen::VectorXd>& x_inner_theta,
                              const Eigen::Ref<const Eigen::VectorXd>& theta, bool has_constant_term);
double coercivity_lower_bound(const AffineModel& model, const Eigen::Ref<const Eigen::VectorXd>& theta);

double coercivity_lower_bound(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta);

struct RbSolution {
  Eigen::VectorXd coefficients;
  double error_bound = 0.0;  // >= ||x - V c||_X
  double state_norm = 0.0;   // ||V c||_X
};

RbSolution rb_solve(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta,
                    const Eigen::Ref<const Eigen::VectorXd>& u);

/// Reduced solutions for several parameters at one theta together with the
/// sup over u of the relative bound Delta / ||V c||_X.
struct RbBatch {
  Eigen::MatrixXd coefficients;  // n x columns(u)
  double sup_relative_bound = 0.0;
  Eigen::VectorXd worst_u;
};

/// Reduced solves for u = columns of `directions` and the supremum over the
/// whole parameter space of the relative bound.
RbBatch rb_solve_batch(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const Eigen::Ref<const Eigen::MatrixXd>& directions);

/// Certified relative accuracy eps with ||x - x~||_X <= eps ||x||_X for all u.
double certified_relative_accuracy(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta);

struct GreedyOptions {
  double tolerance = 1e-4;
  int max_size = 200;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
};

struct GreedyRecord {
  int iteration = 0;
  double max_bound = 0.0;             // sup over u, max over the training set
  double true_error_at_argmax = 0.0;  // ||x - x~||_X / ||x||_X there
  Eigen::Index argmax = 0;
};

struct GreedyResult {
  ReducedBasis rb;
  std::vector<GreedyRecord> history;
  bool converged = false;
};

/// Weak greedy over train_set x parameter space: each iteration adds the
/// full-order snapshot at the theta and direction u maximizing the relative
/// bound. Starts at (train_set[0], leading prior eigenvector).
GreedyResult greedy_train(const AffineModel& model, const GaussianPrior& prior,
                          std::span<const Eigen::VectorXd> train_set, const GreedyOptions& options);

/// Rebuilds the residual factor from scratch; exposed for tests.
Eigen::MatrixXd residual_factor(const AffineModel& model, const Eigen::MatrixXd& basis);

/// Binary file: magic line, little-endian u64 header length, JSON header,
/// then the matrices as raw little-endian doubles in column-major order.
void save_reduced_basis(const ReducedBasis& rb, const std::filesystem::path& path);
ReducedBasis load_reduced_basis(const std::filesystem::path& path);

}  // namespace obsel
