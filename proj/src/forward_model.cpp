#include "obsel/forward_model.hpp"

#include "obsel/errors.hpp"
#include "obsel/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

namespace obsel {

bool ParameterBox::contains(const Eigen::Ref<const Eigen::VectorXd>& theta, double slack) const {
  if (theta.size() != dim()) return false;
  for (Eigen::Index q = 0; q < dim(); ++q) {
    const double tol = slack * std::max(1.0, std::abs(upper(q)));
    if (theta(q) < lower(q) - tol || theta(q) > upper(q) + tol) return false;
  }
  return true;
}

double Grid::spacing(int axis) const {
  const int n = nodes[static_cast<std::size_t>(axis)];
  const double len = extent[static_cast<std::size_t>(axis)];
  if (axis == 0) return len / n;
  return n > 1 ? len / (n - 1) : len;
}

double Grid::coordinate(int axis, int i) const {
  if (axis != 0 && nodes[static_cast<std::size_t>(axis)] == 1)
    return 0.5 * extent[static_cast<std::size_t>(axis)];
  return i * spacing(axis);
}

double Grid::dual_width(int axis, int i) const {
  const int n = nodes[static_cast<std::size_t>(axis)];
  const double h = spacing(axis);
  if (axis == 0) return i == 0 ? 0.5 * h : h;
  if (n == 1) return extent[static_cast<std::size_t>(axis)];
  return (i == 0 || i == n - 1) ? 0.5 * h : h;
}

Eigen::Vector3d Grid::point(Eigen::Index node) const {
  const int i = static_cast<int>(node % nodes[0]);
  const int j = static_cast<int>((node / nodes[0]) % nodes[1]);
  const int k = static_cast<int>(node / (Eigen::Index{nodes[0]} * nodes[1]));
  return {coordinate(0, i), coordinate(1, j), coordinate(2, k)};
}

SparseMatrix AffineModel::assemble(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != dim_theta())
    throw DimensionMismatch("theta of length " + std::to_string(theta.size()) + ", expected " +
                            std::to_string(dim_theta()));
  SparseMatrix a = terms[0];
  for (Eigen::Index q = 0; q < dim_theta(); ++q) a += theta(q) * terms[static_cast<std::size_t>(q + 1)];
  return a;
}

double AffineModel::x_norm_sq(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return x.dot(x_inner * x);
}

void AffineModel::finalize() {
  auto factor = std::make_shared<SparseCholesky>(x_inner);
  if (factor->info() != Eigen::Success) throw NotSPD("state inner product matrix");
  x_factor = std::move(factor);
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

int layer_at(const std::vector<double>& tops, double x1) {
  for (std::size_t q = 0; q + 1 < tops.size(); ++q)
    if (x1 < tops[q]) return static_cast<int>(q);
  return static_cast<int>(tops.size()) - 1;
}

void add_edge(Triplets& t, Eigen::Index a, Eigen::Index b, double c) {
  t.emplace_back(a, a, c);
  t.emplace_back(b, b, c);
  t.emplace_back(a, b, -c);
  t.emplace_back(b, a, -c);
}

void validate(const TestProblemConfig& cfg) {
  if (cfg.grid[0] < 2) throw ConfigInvalid("grid needs at least 2 nodes along the depth axis");
  for (int a = 1; a < 3; ++a)
    if (cfg.grid[static_cast<std::size_t>(a)] < 1) throw ConfigInvalid("grid dimension below 1");
  for (double e : cfg.extent)
    if (!(e > 0.0)) throw ConfigInvalid("domain extents must be positive");
  if (cfg.layer_tops.empty()) throw ConfigInvalid("at least one layer required");
  for (std::size_t q = 0; q < cfg.layer_tops.size(); ++q) {
    if (q > 0 && !(cfg.layer_tops[q] > cfg.layer_tops[q - 1]))
      throw ConfigInvalid("layer_tops must be increasing");
  }
  if (std::abs(cfg.layer_tops.back() - cfg.extent[0]) > 1e-12 * cfg.extent[0])
    throw ConfigInvalid("last layer top must equal the depth extent");
  const auto p = static_cast<Eigen::Index>(cfg.layer_tops.size());
  if (cfg.box.lower.size() != p || cfg.box.upper.size() != p)
    throw ConfigInvalid("hyper-parameter box dimension differs from the layer count");
  for (Eigen::Index q = 0; q < p; ++q)
    if (!(cfg.box.lower(q) > 0.0) || !(cfg.box.upper(q) >= cfg.box.lower(q)))
      throw ConfigInvalid("hyper-parameter box must be positive and ordered");
  if (cfg.theta_ref.size() > 0 && !cfg.box.contains(cfg.theta_ref))
    throw ConfigInvalid("theta_ref outside the hyper-parameter box");
  if (cfg.flux_modes < 1 || cfg.flux_modes > 5) throw ConfigInvalid("flux_modes must be in 1..5");
  if (cfg.sites[0] < 1 || cfg.sites[1] < 1) throw ConfigInvalid("site grid must be nonempty");
}

/// Discrete L2(Gamma_in)-orthonormal flux polynomials on the basal nodes.
Eigen::MatrixXd flux_basis(const Grid& grid, int modes) {
  const int n1 = grid.nodes[1];
  const int n2 = grid.nodes[2];
  const Eigen::Index nb = Eigen::Index{n1} * n2;
  Eigen::VectorXd weight(nb);
  Eigen::MatrixXd mono(nb, 5);
  for (int k = 0; k < n2; ++k)
    for (int j = 0; j < n1; ++j) {
      const Eigen::Index r = Eigen::Index{k} * n1 + j;
      const double x2 = grid.coordinate(1, j);
      const double x3 = grid.coordinate(2, k);
      weight(r) = grid.dual_width(1, j) * grid.dual_width(2, k);
      mono.row(r) << 1.0, x2, x3, x2 * x2, x3 * x3;
    }
  Eigen::MatrixXd basis = mono.leftCols(modes);
  auto inner = [&](const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
    return (weight.array() * f.array() * g.array()).sum();
  };
  for (int m = 0; m < modes; ++m) {
    Eigen::VectorXd v = basis.col(m);
    const double original = std::sqrt(inner(v, v));
    for (int pass = 0; pass < 2; ++pass)
      for (int l = 0; l < m; ++l) v -= inner(basis.col(l), v) * basis.col(l);
    const double norm = std::sqrt(inner(v, v));
    if (!(norm > 1e-10 * original))
      throw ConfigInvalid("flux polynomial " + std::to_string(m + 1) +
                          " is degenerate on this grid; reduce flux_modes");
    basis.col(m) = v / norm;
  }
  return basis;
}

std::vector<NodeWeight> nearest_stencil(const Grid& grid, const Eigen::Vector3d& x) {
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const int n = grid.nodes[static_cast<std::size_t>(a)];
    if (a != 0 && n == 1) {
      idx[static_cast<std::size_t>(a)] = 0;
      continue;
    }
    const int i = static_cast<int>(std::lround(x(a) / grid.spacing(a)));
    idx[static_cast<std::size_t>(a)] = std::clamp(i, 0, n - 1);
  }
  return {{grid.index(idx[0], idx[1], idx[2]), 1.0}};
}

std::vector<NodeWeight> trilinear_stencil(const Grid& grid, const Eigen::Vector3d& x) {
  std::array<std::array<int, 2>, 3> cell{};
  std::array<std::array<double, 2>, 3> w{};
  for (int a = 0; a < 3; ++a) {
    const auto sa = static_cast<std::size_t>(a);
    const int n = grid.nodes[sa];
    if (a != 0 && n == 1) {
      cell[sa] = {0, 0};
      w[sa] = {1.0, 0.0};
      continue;
    }
    // Along depth the last cell ends on the Dirichlet surface (index n).
    const int last = a == 0 ? n : n - 1;
    const double h = grid.spacing(a);
    const int lo = std::clamp(static_cast<int>(std::floor(x(a) / h)), 0, last - 1);
    const double f = std::clamp(x(a) / h - lo, 0.0, 1.0);
    cell[sa] = {lo, lo + 1};
    w[sa] = {1.0 - f, f};
  }
  std::vector<NodeWeight> out;
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a) {
        const double weight = w[0][static_cast<std::size_t>(a)] * w[1][static_cast<std::size_t>(b)] *
                              w[2][static_cast<std::size_t>(c)];
        const int i = cell[0][static_cast<std::size_t>(a)];
        if (weight == 0.0 || i >= grid.nodes[0]) continue;  // surface nodes are zero
        const Eigen::Index node =
            grid.index(i, cell[1][static_cast<std::size_t>(b)], cell[2][static_cast<std::size_t>(c)]);
        auto it = std::find_if(out.begin(), out.end(), [node](const NodeWeight& nw) { return nw.node == node; });
        if (it != out.end())
          it->weight += weight;
        else
          out.push_back({node, weight});
      }
  return out;
}

double site_coordinate(const Grid& grid, int axis, int site, int count, bool interpolate) {
  const int n = grid.nodes[static_cast<std::size_t>(axis)];
  if (n == 1) return grid.coordinate(axis, 0);
  const double x = (site + 0.5) * grid.extent[static_cast<std::size_t>(axis)] / count;
  if (interpolate) return x;
  return grid.coordinate(axis, static_cast<int>(std::lround(x / grid.spacing(axis))));
}

SensorLibrary build_library(const TestProblemConfig& cfg, const Grid& grid) {
  std::vector<double> depths = cfg.depths;
  if (depths.empty()) {
    const int count = std::min(5, grid.nodes[0] - 1);
    for (int d = 1; d <= count; ++d) depths.push_back(d * grid.spacing(0));
  }
  for (double d : depths)
    if (!(d > 0.0) || !(d <= cfg.extent[0])) throw ConfigInvalid("sensor depth outside (0, extent]");

  std::mt19937_64 rng(cfg.depth_seed);
  std::uniform_int_distribution<std::size_t> pick(0, depths.size() - 1);

  std::vector<Sensor> sensors;
  std::set<std::pair<double, double>> seen;
  int site = 0;
  for (int b = 0; b < cfg.sites[1]; ++b)
    for (int a = 0; a < cfg.sites[0]; ++a, ++site) {
      const double x2 = site_coordinate(grid, 1, a, cfg.sites[0], cfg.interpolate);
      const double x3 = site_coordinate(grid, 2, b, cfg.sites[1], cfg.interpolate);
      if (!seen.insert({x2, x3}).second)
        throw ConfigInvalid("two drilling sites coincide; the site grid is finer than the node grid");
      std::vector<double> site_depths = depths;
      if (cfg.site_depths == SiteDepths::one_random) site_depths = {depths[pick(rng)]};
      for (double d : site_depths) {
        Eigen::Vector3d loc(cfg.extent[0] - d, x2, x3);
        Sensor s;
        s.id = static_cast<int>(sensors.size());
        s.site_id = site;
        if (cfg.interpolate) {
          s.location = loc;
          s.stencil = trilinear_stencil(grid, loc);
        } else {
          s.stencil = nearest_stencil(grid, loc);
          s.location = grid.point(s.stencil.front().node);
          for (const auto& other : sensors)
            if (other.site_id == site && other.stencil.front().node == s.stencil.front().node)
              throw ConfigInvalid("two depths snap to the same node");
        }
        if (s.stencil.empty()) throw ConfigInvalid("sensor on the Dirichlet surface");
        sensors.push_back(std::move(s));
      }
    }
  return SensorLibrary(std::move(sensors));
}

}  // namespace

std::pair<AffineModel, SensorLibrary> build_test_problem(const TestProblemConfig& config) {
  validate(config);
  Grid grid{config.grid, config.extent};
  const int n0 = grid.nodes[0];
  const int n1 = grid.nodes[1];
  const int n2 = grid.nodes[2];
  const Eigen::Index n = grid.size();
  const auto p = static_cast<int>(config.layer_tops.size());

  std::vector<Triplets> per_layer(static_cast<std::size_t>(p));
  std::vector<int> edges_in_layer(static_cast<std::size_t>(p), 0);
  const double h0 = grid.spacing(0);
  const double h1 = grid.spacing(1);
  const double h2 = grid.spacing(2);

  for (int k = 0; k < n2; ++k)
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n0; ++i) {
        const Eigen::Index a = grid.index(i, j, k);
        // depth edge to i+1, the last one ends on the Dirichlet surface
        {
          const int q = layer_at(config.layer_tops, (i + 0.5) * h0);
          const double c = grid.dual_width(1, j) * grid.dual_width(2, k) / h0;
          auto& t = per_layer[static_cast<std::size_t>(q)];
          if (i + 1 < n0)
            add_edge(t, a, grid.index(i + 1, j, k), c);
          else
            t.emplace_back(a, a, c);
          ++edges_in_layer[static_cast<std::size_t>(q)];
        }
        const int q = layer_at(config.layer_tops, i * h0);
        if (j + 1 < n1) {
          add_edge(per_layer[static_cast<std::size_t>(q)], a, grid.index(i, j + 1, k),
                   grid.dual_width(0, i) * grid.dual_width(2, k) / h1);
          ++edges_in_layer[static_cast<std::size_t>(q)];
        }
        if (k + 1 < n2) {
          add_edge(per_layer[static_cast<std::size_t>(q)], a, grid.index(i, j, k + 1),
                   grid.dual_width(0, i) * grid.dual_width(1, j) / h2);
          ++edges_in_layer[static_cast<std::size_t>(q)];
        }
      }
  for (int q = 0; q < p; ++q)
    if (edges_in_layer[static_cast<std::size_t>(q)] == 0)
      throw ConfigInvalid("layer " + std::to_string(q + 1) + " contains no grid edges");

  AffineModel model;
  model.grid = grid;
  model.terms.emplace_back(n, n);
  for (int q = 0; q < p; ++q) {
    SparseMatrix a(n, n);
    const auto& t = per_layer[static_cast<std::size_t>(q)];
    a.setFromTriplets(t.begin(), t.end());
    model.terms.push_back(std::move(a));
  }

  const Eigen::MatrixXd flux = flux_basis(grid, config.flux_modes);
  model.rhs = Eigen::MatrixXd::Zero(n, config.flux_modes);
  for (int k = 0; k < n2; ++k)
    for (int j = 0; j < n1; ++j)
      model.rhs.row(grid.index(0, j, k)) =
          flux.row(Eigen::Index{k} * n1 + j) * grid.dual_width(1, j) * grid.dual_width(2, k);

  model.x_inner_theta = Eigen::VectorXd::Ones(p);
  model.x_inner = model.assemble(model.x_inner_theta);
  model.box = config.box;
  model.theta_ref = config.theta_ref.size() > 0 ? config.theta_ref : config.box.center();
  model.layer_of_node.resize(static_cast<std::size_t>(n));
  for (Eigen::Index node = 0; node < n; ++node)
    model.layer_of_node[static_cast<std::size_t>(node)] =
        layer_at(config.layer_tops, grid.point(node)(0));
  model.finalize();

  return {std::move(model), build_library(config, grid)};
}

FullOrderSolver::FullOrderSolver(const AffineModel& model,
                                 const Eigen::Ref<const Eigen::VectorXd>& theta)
    : model_(&model), matrix_(model.assemble(theta)) {
  factor_.compute(matrix_);
  if (factor_.info() != Eigen::Success) throw SolveFailed("A(theta) is not positive definite");
}

Eigen::VectorXd FullOrderSolver::solve(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  return solve_many(u).col(0);
}

Eigen::MatrixXd FullOrderSolver::solve_many(const Eigen::Ref<const Eigen::MatrixXd>& u) const {
  if (u.rows() != model_->dim_param())
    throw DimensionMismatch("parameter of length " + std::to_string(u.rows()) + ", expected " +
                            std::to_string(model_->dim_param()));
  const Eigen::MatrixXd load = model_->rhs * u;
  Eigen::MatrixXd x = factor_.solve(load);
  if (factor_.info() != Eigen::Success) throw SolveFailed("triangular solves failed");
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double ref = load.col(c).norm();
    const double res = (matrix_ * x.col(c) - load.col(c)).norm();
    if (res > 1e-10 * ref) throw SolveFailed("relative residual " + std::to_string(res / ref));
  }
  return x;
}

Eigen::VectorXd solve(const AffineModel& model, const Eigen::Ref<const Eigen::VectorXd>& theta,
                      const Eigen::Ref<const Eigen::VectorXd>& u) {
  return FullOrderSolver(model, theta).solve(u);
}

Eigen::VectorXd apply_sensors(const SensorLibrary& library, std::span<const int> subset,
                              const Eigen::Ref<const Eigen::VectorXd>& state) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(subset.size()));
  for (std::size_t r = 0; r < subset.size(); ++r)
    out(static_cast<Eigen::Index>(r)) = library.at(subset[r]).apply(state);
  return out;
}

EtaExtremes eta_extremes_from_states(const AffineModel& model, const Eigen::MatrixXd& unit_states,
                                     const GaussianPrior& prior) {
  const Eigen::MatrixXd gram = unit_states.transpose() * (model.x_inner * unit_states);
  const auto eig = generalized_eigen(gram, prior.precision());
  return {std::sqrt(std::max(eig.values(0), 0.0)),
          std::sqrt(std::max(eig.values(eig.values.size() - 1), 0.0))};
}

EtaExtremes eta_extremes(const AffineModel& model, const Eigen::Ref<const Eigen::VectorXd>& theta,
                         const GaussianPrior& prior) {
  const FullOrderSolver solver(model, theta);
  return eta_extremes_from_states(
      model, solver.solve_many(Eigen::MatrixXd::Identity(model.dim_param(), model.dim_param())), prior);
}

}  // namespace obsel
