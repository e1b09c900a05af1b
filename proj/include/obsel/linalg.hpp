#pragma once

#include <Eigen/Dense>

namespace obsel {

/// Solution of lhs c = mu rhs c for symmetric lhs and SPD rhs. Eigenvalues
/// ascending; eigenvectors satisfy c' rhs c = 1.
struct GeneralizedEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// Cholesky-whitens rhs and solves the resulting standard symmetric problem.
/// Throws EigenFailure when rhs is not SPD or the solver does not converge.
GeneralizedEigen generalized_eigen(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs);

/// Same problem with lhs = w'w, solved through the SVD of w L^{-T} where
/// rhs = L L'. Small eigenvalues keep their relative accuracy, which the
/// normal-equation form loses.
GeneralizedEigen gram_generalized_eigen(const Eigen::MatrixXd& w, const Eigen::MatrixXd& rhs);

}  // namespace obsel
