#pragma once

#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/prior.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace testing {

/// Small three-layer problem: 8 x 6 x 6 nodes, 3 x 3 sites with five depths.
inline obsel::TestProblemConfig small_config() {
  obsel::TestProblemConfig c;
  c.grid = {8, 6, 6};
  c.sites = {3, 3};
  return c;
}

inline Eigen::MatrixXd random_spd(Eigen::Index m, std::mt19937_64& rng, double shift = 0.5) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = n(rng);
  return a * a.transpose() + shift * Eigen::MatrixXd::Identity(m, m);
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = n(rng);
  return a;
}

inline Eigen::VectorXd random_vector(Eigen::Index r, std::mt19937_64& rng) {
  return random_matrix(r, 1, rng).col(0);
}

inline obsel::Sensor sensor_at(int id, double x2, double x3, int site) {
  obsel::Sensor s;
  s.id = id;
  s.location = Eigen::Vector3d(0.1, x2, x3);
  s.site_id = site;
  s.stencil = {{id, 1.0}};
  return s;
}

/// Noise state holding an arbitrary SPD covariance, built by repeated expansion.
inline obsel::NoiseState noise_state(const Eigen::MatrixXd& cov, double sigma2 = 1.0) {
  obsel::NoiseState s(sigma2);
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    s.expand(sensor_at(static_cast<int>(i), static_cast<double>(i), 0.0, static_cast<int>(i)),
             cov.col(i).head(i), cov(i, i));
  return s;
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

/// Symmetric square root from a fresh eigen-solve, independent of GaussianPrior.
inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& a) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e(a);
  return e.eigenvectors() * e.eigenvalues().cwiseSqrt().asDiagonal() * e.eigenvectors().transpose();
}

/// Independent noise-weighted beta: smallest singular value of
/// Lchol^{-1} G Sigma_pr^{1/2} with a from-scratch Cholesky and BDCSVD.
inline double oracle_beta(const Eigen::MatrixXd& noise_cov, const Eigen::MatrixXd& g,
                          const Eigen::MatrixXd& prior_cov) {
  if (g.rows() < g.cols()) return 0.0;
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(noise_cov).matrixL();
  const Eigen::MatrixXd w = l.triangularView<Eigen::Lower>().solve(g) * sym_sqrt(prior_cov);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(w);
  return svd.singularValues()(g.cols() - 1);
}

}  // namespace testing
