#pragma once

#include <Eigen/Dense>

namespace obsel {

/// Eigenpairs of a symmetric positive definite matrix, eigenvalues descending.
struct EigenPairs {
  Eigen::MatrixXd vectors;  // orthonormal columns
  Eigen::VectorXd values;
};

/// Throws NotSPD for asymmetric input or a non-positive eigenvalue. Ties keep
/// the solver's order.
EigenPairs eigendecompose(const Eigen::MatrixXd& cov);

/// Gaussian prior N(mean, cov) with cov = U diag(lambda) U'.
class GaussianPrior {
 public:
  GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  Eigen::Index dim() const { return mean_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::MatrixXd& eigenvectors() const { return eig_.vectors; }
  const Eigen::VectorXd& eigenvalues() const { return eig_.values; }
  /// cov^{-1} assembled from the eigenpairs.
  Eigen::MatrixXd precision() const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  EigenPairs eig_;
};

/// u' cov^{-1} u
double prior_norm_sq(const GaussianPrior& prior, const Eigen::Ref<const Eigen::VectorXd>& u);

}  // namespace obsel
