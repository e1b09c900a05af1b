#pragma once

#include "obsel/noise_model.hpp"
#include "obsel/prior.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace obsel {

using SparseMatrix = Eigen::SparseMatrix<double>;
using SparseCholesky = Eigen::SimplicialLLT<SparseMatrix>;

/// Compact box of admissible hyper-parameters.
struct ParameterBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& theta, double slack = 1e-12) const;
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
};

/// Vertex grid of the box domain. Axis 0 (x1) is depth: nodes sit at i*h for
/// i < n[0], and the Dirichlet surface x1 = extent[0] carries no unknowns.
/// Axes 1 and 2 include both lateral faces; a single node spans the full width.
struct Grid {
  std::array<int, 3> nodes{};
  std::array<double, 3> extent{};

  Eigen::Index size() const { return Eigen::Index{nodes[0]} * nodes[1] * nodes[2]; }
  Eigen::Index index(int i, int j, int k) const {
    return (Eigen::Index{k} * nodes[1] + j) * nodes[0] + i;
  }
  double spacing(int axis) const;
  double coordinate(int axis, int i) const;
  /// Length of the dual cell of node i along an axis.
  double dual_width(int axis, int i) const;
  Eigen::Vector3d point(Eigen::Index node) const;
};

/// A(theta) = A_0 + sum_q theta_q A_q, right-hand side B u. The solution map
/// u -> x_theta(u) is linear.
struct AffineModel {
  std::vector<SparseMatrix> terms;  // terms[0] is theta-independent
  Eigen::MatrixXd rhs;              // N x M, column m is the load of e_m
  SparseMatrix x_inner;             // Gram matrix of the state inner product
  Eigen::VectorXd x_inner_theta;    // x_inner == A(x_inner_theta)
  ParameterBox box;
  Eigen::VectorXd theta_ref;
  Grid grid;
  std::vector<int> layer_of_node;
  std::shared_ptr<const SparseCholesky> x_factor;

  Eigen::Index dim_state() const { return rhs.rows(); }
  Eigen::Index dim_param() const { return rhs.cols(); }
  Eigen::Index dim_theta() const { return static_cast<Eigen::Index>(terms.size()) - 1; }
  SparseMatrix assemble(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  /// ||x||_X^2
  double x_norm_sq(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Factorizes x_inner; called by the builders.
  void finalize();
};

enum class SiteDepths { all, one_random };

struct TestProblemConfig {
  std::array<int, 3> grid{12, 20, 20};
  std::array<double, 3> extent{0.2714, 0.9, 1.0};
  /// Upper x1 bound of each layer, increasing, last equal to extent[0].
  std::vector<double> layer_tops{0.09, 0.18, 0.2714};
  ParameterBox box{Eigen::Vector3d(0.453, 0.448, 0.360), Eigen::Vector3d(1.360, 1.343, 1.081)};
  Eigen::VectorXd theta_ref;  // empty -> box center
  int flux_modes = 5;
  std::array<int, 2> sites{10, 10};
  /// Distances below the surface; empty -> the first five node layers.
  std::vector<double> depths;
  SiteDepths site_depths = SiteDepths::all;
  std::uint64_t depth_seed = 1;
  bool interpolate = false;
};

/// Steady conduction -div(theta grad x) = 0 on a box: zero Dirichlet at the
/// surface, no-flow lateral faces, basal flux u . p with p the discrete
/// L2-orthonormal polynomials {1, x2, x3, x2^2, x3^2}. Conservative 7-point
/// finite differences with one conductivity per layer.
std::pair<AffineModel, SensorLibrary> build_test_problem(const TestProblemConfig& config);

/// Factorization of A(theta) reused across right-hand sides.
class FullOrderSolver {
 public:
  FullOrderSolver(const AffineModel& model, const Eigen::Ref<const Eigen::VectorXd>& theta);

  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  Eigen::MatrixXd solve_many(const Eigen::Ref<const Eigen::MatrixXd>& u) const;

 private:
  const AffineModel* model_;
  SparseMatrix matrix_;
  SparseCholesky factor_;
};

Eigen::VectorXd solve(const AffineModel& model, const Eigen::Ref<const Eigen::VectorXd>& theta,
                      const Eigen::Ref<const Eigen::VectorXd>& u);

Eigen::VectorXd apply_sensors(const SensorLibrary& library, std::span<const int> subset,
                              const Eigen::Ref<const Eigen::VectorXd>& state);

struct EtaExtremes {
  double eta_min = 0.0;
  double eta_max = 0.0;
};

/// Extremal ratios ||x_theta(u)||_X / ||u||_pr over u.
EtaExtremes eta_extremes(const AffineModel& model, const Eigen::Ref<const Eigen::VectorXd>& theta,
                         const GaussianPrior& prior);
/// Same, from precomputed states x_theta(e_m) as columns.
EtaExtremes eta_extremes_from_states(const AffineModel& model, const Eigen::MatrixXd& unit_states,
                                     const GaussianPrior& prior);

}  // namespace obsel
