#include "obsel/rom.hpp"

#include "obsel/errors.hpp"
#include "obsel/kernels.hpp"
#include "obsel/linalg.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>

namespace obsel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRejectTol = 1e-12;
constexpr double kDependentColumnTol = 1e-13;

/// Column-appending thin QR by classical Gram-Schmidt with reorthogonalization.
/// Columns numerically inside the current span add no row to R.
struct AppendQR {
  Eigen::MatrixXd q;
  Eigen::MatrixXd r;

  void append(Eigen::VectorXd z) {
    const double original = z.norm();
    const Eigen::Index rank = q.cols();
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(rank);
    if (rank > 0)
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd c = q.transpose() * z;
        z.noalias() -= q * c;
        coef += c;
      }
    const double rho = z.norm();
    const bool grows = rho > kDependentColumnTol * original && rho > 0.0;
    const Eigen::Index cols = r.cols();
    const Eigen::Index rows = rank + (grows ? 1 : 0);
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(rows, cols + 1);
    next.topLeftCorner(r.rows(), cols) = r;
    next.col(cols).head(rank) = coef;
    if (grows) {
      next(rank, cols) = rho;
      q.conservativeResize(z.size(), rank + 1);
      q.col(rank) = z / rho;
    }
    r = std::move(next);
  }
};

Eigen::VectorXd whitened_riesz(const SparseCholesky& factor, const Eigen::VectorXd& functional) {
  const Eigen::VectorXd permuted = factor.permutationP() * functional;
  return factor.matrixL().solve(permuted);
}

/// Map u -> residual coefficients [u; -theta_q c_j] for c = S u.
Eigen::MatrixXd coefficient_map(const Eigen::MatrixXd& s, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const Eigen::Index m = s.cols();
  const Eigen::Index n = s.rows();
  const Eigen::Index p1 = theta.size() + 1;
  Eigen::MatrixXd out(m + p1 * n, m);
  out.topRows(m).setIdentity();
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index q = 0; q < p1; ++q)
      out.row(m + j * p1 + q) = -(q == 0 ? 1.0 : theta(q - 1)) * s.row(j);
  return out;
}

Eigen::LLT<Eigen::MatrixXd> reduced_factor(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  Eigen::LLT<Eigen::MatrixXd> llt(rb.assemble(theta));
  if (llt.info() != Eigen::Success) throw SolveFailed("reduced operator is not positive definite");
  return llt;
}

}  // namespace

Eigen::MatrixXd ReducedBasis::assemble(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != dim_theta())
    throw DimensionMismatch("theta of length " + std::to_string(theta.size()) + ", expected " +
                            std::to_string(dim_theta()));
  Eigen::MatrixXd a = reduced_terms[0];
  for (Eigen::Index q = 0; q < dim_theta(); ++q) a += theta(q) * reduced_terms[static_cast<std::size_t>(q + 1)];
  return a;
}

Eigen::RowVectorXd ReducedBasis::project_sensor(const Sensor& sensor) const {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(size());
  for (const auto& nw : sensor.stencil) out += nw.weight * basis.row(nw.node);
  return out;
}

double coercivity_lower_bound(const Eigen::Ref<const Eigen::VectorXd>& x_inner_theta,
                              const Eigen::Ref<const Eigen::VectorXd>& theta, bool has_constant_term) {
  if (theta.size() != x_inner_theta.size()) throw DimensionMismatch("theta length for coercivity bound");
  double lb = has_constant_term || theta.size() == 0 ? 1.0 : kInf;
  for (Eigen::Index q = 0; q < theta.size(); ++q) lb = std::min(lb, theta(q) / x_inner_theta(q));
  return lb;
}

double coercivity_lower_bound(const AffineModel& model, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  return coercivity_lower_bound(model.x_inner_theta, theta, model.terms[0].norm() > 0.0);
}

double coercivity_lower_bound(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  return coercivity_lower_bound(rb.x_inner_theta, theta, rb.has_constant_term);
}

RbSolution rb_solve(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta,
                    const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() != rb.dim_param()) throw DimensionMismatch("parameter length for reduced solve");
  const auto llt = reduced_factor(rb, theta);
  RbSolution out;
  out.coefficients = llt.solve(rb.reduced_rhs * u);
  const Eigen::Index m = rb.dim_param();
  const Eigen::Index p1 = rb.dim_theta() + 1;
  Eigen::VectorXd coeff(m + p1 * rb.size());
  coeff.head(m) = u;
  for (Eigen::Index j = 0; j < rb.size(); ++j)
    for (Eigen::Index q = 0; q < p1; ++q)
      coeff(m + j * p1 + q) = -(q == 0 ? 1.0 : theta(q - 1)) * out.coefficients(j);
  out.error_bound = (rb.residual_factor * coeff).norm() / coercivity_lower_bound(rb, theta);
  out.state_norm = out.coefficients.norm();
  return out;
}

RbBatch rb_solve_batch(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const Eigen::Ref<const Eigen::MatrixXd>& directions) {
  if (directions.rows() != rb.dim_param()) throw DimensionMismatch("direction length for reduced solve");
  const auto llt = reduced_factor(rb, theta);
  const Eigen::MatrixXd s = llt.solve(rb.reduced_rhs);
  RbBatch out;
  out.coefficients = s * directions;

  const Eigen::Index m = rb.dim_param();
  const Eigen::MatrixXd ss = s.transpose() * s;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> state_eig(ss);
  const double smax = state_eig.eigenvalues()(m - 1);
  if (rb.size() < m || !(state_eig.eigenvalues()(0) > 1e-13 * smax)) {
    // some u has a zero reduced state
    out.sup_relative_bound = kInf;
    out.worst_u = state_eig.eigenvectors().col(0);
  } else {
    const double alpha = coercivity_lower_bound(rb, theta);
    const Eigen::MatrixXd e = rb.residual_factor * coefficient_map(s, theta) / alpha;
    const auto eig = generalized_eigen(e.transpose() * e, ss);
    out.sup_relative_bound = std::sqrt(std::max(eig.values(m - 1), 0.0));
    out.worst_u = eig.vectors.col(m - 1).normalized();
  }
  Eigen::Index lead = 0;
  out.worst_u.cwiseAbs().maxCoeff(&lead);
  if (out.worst_u(lead) < 0.0) out.worst_u = -out.worst_u;
  return out;
}

double certified_relative_accuracy(const ReducedBasis& rb, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const double r = rb_solve_batch(rb, theta, Eigen::MatrixXd(rb.dim_param(), 0)).sup_relative_bound;
  return r < 1.0 ? r / (1.0 - r) : kInf;
}

Eigen::MatrixXd residual_factor(const AffineModel& model, const Eigen::MatrixXd& basis) {
  const Eigen::Index m = model.dim_param();
  const Eigen::Index p1 = model.dim_theta() + 1;
  const Eigen::Index n = basis.cols();
  Eigen::MatrixXd z(model.dim_state(), m + p1 * n);
  for (Eigen::Index c = 0; c < m; ++c) z.col(c) = whitened_riesz(*model.x_factor, model.rhs.col(c));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index q = 0; q < p1; ++q)
      z.col(m + j * p1 + q) =
          whitened_riesz(*model.x_factor, model.terms[static_cast<std::size_t>(q)] * basis.col(j));
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  const Eigen::Index rows = std::min(z.rows(), z.cols());
  return qr.matrixQR().topRows(rows).triangularView<Eigen::Upper>();
}

namespace {

class GreedyBuilder {
 public:
  GreedyBuilder(const AffineModel& model, double tolerance) : model_(&model) {
    const Eigen::Index p1 = model.dim_theta() + 1;
    rb_.basis.resize(model.dim_state(), 0);
    rb_.reduced_terms.assign(static_cast<std::size_t>(p1), Eigen::MatrixXd(0, 0));
    rb_.reduced_rhs.resize(0, model.dim_param());
    rb_.x_inner_theta = model.x_inner_theta;
    rb_.has_constant_term = model.terms[0].norm() > 0.0;
    rb_.tolerance = tolerance;
    applied_.assign(static_cast<std::size_t>(p1), Eigen::MatrixXd(model.dim_state(), 0));
    for (Eigen::Index c = 0; c < model.dim_param(); ++c)
      qr_.append(whitened_riesz(*model.x_factor, model.rhs.col(c)));
    rb_.residual_factor = qr_.r;
  }

  void add(const Eigen::VectorXd& snapshot) {
    const auto& x = model_->x_inner;
    const double original = std::sqrt(std::max(snapshot.dot(x * snapshot), 0.0));
    Eigen::VectorXd v = snapshot;
    const Eigen::Index n = rb_.size();
    for (int pass = 0; pass < 2 && n > 0; ++pass) v.noalias() -= rb_.basis * (xv_.transpose() * v);
    const Eigen::VectorXd xv = x * v;
    const double norm = std::sqrt(std::max(v.dot(xv), 0.0));
    if (!(norm > kRejectTol * original))
      throw StagnationError("snapshot lies in the span of the basis (relative norm " +
                            std::to_string(original > 0.0 ? norm / original : 0.0) + ")");
    v /= norm;

    rb_.basis.conservativeResize(Eigen::NoChange, n + 1);
    rb_.basis.col(n) = v;
    xv_.conservativeResize(x.rows(), n + 1);
    xv_.col(n) = xv / norm;

    for (std::size_t q = 0; q < applied_.size(); ++q) {
      auto& a = applied_[q];
      a.conservativeResize(Eigen::NoChange, n + 1);
      a.col(n) = model_->terms[q] * v;
      auto& t = rb_.reduced_terms[q];
      t.conservativeResize(n + 1, n + 1);
      t.row(n) = v.transpose() * a;
      t.col(n) = rb_.basis.transpose() * a.col(n);
      qr_.append(whitened_riesz(*model_->x_factor, a.col(n)));
    }
    rb_.reduced_rhs.conservativeResize(n + 1, Eigen::NoChange);
    rb_.reduced_rhs.row(n) = v.transpose() * model_->rhs;
    rb_.residual_factor = qr_.r;
  }

  const ReducedBasis& rb() const { return rb_; }
  ReducedBasis& rb() { return rb_; }

 private:
  const AffineModel* model_;
  ReducedBasis rb_;
  Eigen::MatrixXd xv_;  // X V
  std::vector<Eigen::MatrixXd> applied_;  // A_q V
  AppendQR qr_;
};

}  // namespace

GreedyResult greedy_train(const AffineModel& model, const GaussianPrior& prior,
                          std::span<const Eigen::VectorXd> train_set, const GreedyOptions& options) {
  if (train_set.empty()) throw ConfigInvalid("empty reduced-basis training set");
  if (!(options.tolerance > 0.0)) throw ConfigInvalid("reduced-basis tolerance must be positive");
  if (options.max_size < 1) throw ConfigInvalid("reduced-basis max_size must be at least 1");
  if (prior.dim() != model.dim_param()) throw DimensionMismatch("prior dimension differs from the model");
  for (const auto& theta : train_set)
    if (!model.box.contains(theta)) throw ConfigInvalid("training hyper-parameter outside the box");

  GreedyBuilder builder(model, options.tolerance);
  GreedyResult result;
  Eigen::VectorXd snapshot = solve(model, train_set[0], prior.eigenvectors().col(0));
  while (true) {
    builder.add(snapshot);
    const ReducedBasis& rb = builder.rb();
    const auto batches = rb_bounds(options.policy, rb, train_set);

    std::size_t arg = 0;
    for (std::size_t i = 1; i < batches.size(); ++i)
      if (batches[i].sup_relative_bound > batches[arg].sup_relative_bound) arg = i;
    const Eigen::VectorXd& u = batches[arg].worst_u;
    snapshot = solve(model, train_set[arg], u);
    const Eigen::VectorXd approx = rb.reconstruct(rb_solve(rb, train_set[arg], u).coefficients);
    const double err = std::sqrt(model.x_norm_sq(snapshot - approx) / model.x_norm_sq(snapshot));

    GreedyRecord record;
    record.iteration = static_cast<int>(rb.size());
    record.max_bound = batches[arg].sup_relative_bound;
    record.true_error_at_argmax = err;
    record.argmax = static_cast<Eigen::Index>(arg);
    result.history.push_back(record);
    builder.rb().achieved = record.max_bound;

    if (record.max_bound <= options.tolerance) {
      result.converged = true;
      break;
    }
    if (rb.size() >= options.max_size) break;
  }
  result.rb = builder.rb();
  return result;
}

namespace {

constexpr const char* kMagic = "OBSEL-RB 1\n";

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    out.write(bytes, 8);
  }
}

Eigen::MatrixXd read_matrix(std::ifstream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ConfigInvalid("reduced-basis file is truncated");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[b]} << (8 * b);
    m.data()[i] = std::bit_cast<double>(bits);
  }
  return m;
}

}  // namespace

void save_reduced_basis(const ReducedBasis& rb, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json header;
  header["dim_state"] = rb.dim_state();
  header["size"] = rb.size();
  header["dim_param"] = rb.dim_param();
  header["dim_theta"] = rb.dim_theta();
  header["residual_rows"] = rb.residual_factor.rows();
  header["residual_cols"] = rb.residual_factor.cols();
  header["tolerance"] = rb.tolerance;
  header["achieved"] = rb.achieved;
  header["has_constant_term"] = rb.has_constant_term;
  header["x_inner_theta"] = std::vector<double>(rb.x_inner_theta.data(),
                                                rb.x_inner_theta.data() + rb.x_inner_theta.size());
  header["layout"] = "basis, reduced_terms[0..P], reduced_rhs, residual_factor; column-major f64le";
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigInvalid("cannot write " + path.string());
  out << kMagic;
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int b = 0; b < 8; ++b) out.put(static_cast<char>((len >> (8 * b)) & 0xffu));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_matrix(out, rb.basis);
  for (const auto& t : rb.reduced_terms) write_matrix(out, t);
  write_matrix(out, rb.reduced_rhs);
  write_matrix(out, rb.residual_factor);
  if (!out) throw ConfigInvalid("failed writing " + path.string());
}

ReducedBasis load_reduced_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigInvalid("cannot read " + path.string());
  std::string magic(std::char_traits<char>::length(kMagic), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kMagic) throw ConfigInvalid(path.string() + " is not a reduced-basis file");
  unsigned char lenbytes[8];
  if (!in.read(reinterpret_cast<char*>(lenbytes), 8)) throw ConfigInvalid("reduced-basis file is truncated");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= std::uint64_t{lenbytes[b]} << (8 * b);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigInvalid("reduced-basis file is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("reduced-basis header: ") + e.what());
  }
  ReducedBasis rb;
  try {
    const Eigen::Index n_state = header.at("dim_state").get<Eigen::Index>();
    const Eigen::Index n = header.at("size").get<Eigen::Index>();
    const Eigen::Index m = header.at("dim_param").get<Eigen::Index>();
    const Eigen::Index p = header.at("dim_theta").get<Eigen::Index>();
    rb.tolerance = header.at("tolerance").get<double>();
    rb.achieved = header.at("achieved").get<double>();
    rb.has_constant_term = header.at("has_constant_term").get<bool>();
    const auto xi = header.at("x_inner_theta").get<std::vector<double>>();
    rb.x_inner_theta = Eigen::Map<const Eigen::VectorXd>(xi.data(), static_cast<Eigen::Index>(xi.size()));
    rb.basis = read_matrix(in, n_state, n);
    for (Eigen::Index q = 0; q <= p; ++q) rb.reduced_terms.push_back(read_matrix(in, n, n));
    rb.reduced_rhs = read_matrix(in, n, m);
    rb.residual_factor = read_matrix(in, header.at("residual_rows").get<Eigen::Index>(),
                                     header.at("residual_cols").get<Eigen::Index>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("reduced-basis header: ") + e.what());
  }
  if (rb.x_inner_theta.size() != rb.dim_theta()) throw ConfigInvalid("reduced-basis header is inconsistent");
  return rb;
}

}  // namespace obsel
