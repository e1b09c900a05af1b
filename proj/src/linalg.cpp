#include "obsel/linalg.hpp"

#include "obsel/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace obsel {

GeneralizedEigen generalized_eigen(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs) {
  if (lhs.rows() != lhs.cols() || rhs.rows() != rhs.cols() || lhs.rows() != rhs.rows())
    throw DimensionMismatch("generalized eigenproblem operands");
  if (lhs.rows() == 0) return {};
  const Eigen::LLT<Eigen::MatrixXd> llt(rhs);
  if (llt.info() != Eigen::Success) throw EigenFailure("right-hand matrix is not positive definite");
  const auto lower = llt.matrixL();
  Eigen::MatrixXd whitened = lower.solve(lower.solve(lhs).transpose());
  whitened = 0.5 * (whitened + whitened.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(whitened);
  if (solver.info() != Eigen::Success) throw EigenFailure("symmetric eigensolver did not converge");
  return {solver.eigenvalues(), llt.matrixU().solve(solver.eigenvectors())};
}

GeneralizedEigen gram_generalized_eigen(const Eigen::MatrixXd& w, const Eigen::MatrixXd& rhs) {
  if (rhs.rows() != rhs.cols() || w.cols() != rhs.rows())
    throw DimensionMismatch("generalized eigenproblem operands");
  const Eigen::Index r = rhs.rows();
  if (r == 0) return {};
  const Eigen::LLT<Eigen::MatrixXd> llt(rhs);
  if (llt.info() != Eigen::Success) throw EigenFailure("right-hand matrix is not positive definite");
  const Eigen::MatrixXd b = llt.matrixL().solve(w.transpose()).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  GeneralizedEigen out;
  out.values = Eigen::VectorXd::Zero(r);
  Eigen::MatrixXd v(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Eigen::Index j = r - 1 - i;  // ascending
    if (j < sv.size()) out.values(i) = sv(j) * sv(j);
    v.col(i) = svd.matrixV().col(j);
  }
  out.vectors = llt.matrixU().solve(v);
  return out;
}

}  // namespace obsel
