#include "obsel/prior.hpp"

#include "obsel/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <string>

namespace obsel {

EigenPairs eigendecompose(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) throw NotSPD("covariance must be square and nonempty");
  const double scale = std::max(cov.norm(), 1e-300);
  if ((cov - cov.transpose()).norm() > 1e-12 * scale) throw NotSPD("covariance is not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NotSPD("symmetric eigensolver failed");

  const Eigen::Index m = cov.rows();
  EigenPairs out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  if (!(out.values(m - 1) > 0.0))
    throw NotSPD("smallest eigenvalue " + std::to_string(out.values(m - 1)));
  return out;
}

GaussianPrior::GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size()) throw DimensionMismatch("prior mean and covariance sizes differ");
  eig_ = eigendecompose(cov_);
}

Eigen::MatrixXd GaussianPrior::precision() const {
  return eig_.vectors * eig_.values.cwiseInverse().asDiagonal() * eig_.vectors.transpose();
}

double prior_norm_sq(const GaussianPrior& prior, const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() != prior.dim())
    throw DimensionMismatch("parameter of length " + std::to_string(u.size()) + " for prior of dim " +
                            std::to_string(prior.dim()));
  const Eigen::VectorXd coords = prior.eigenvectors().transpose() * u;
  return coords.cwiseAbs2().cwiseQuotient(prior.eigenvalues()).sum();
}

}  // namespace obsel
