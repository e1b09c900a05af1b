#include "obsel/posterior.hpp"

#include "obsel/errors.hpp"
#include "obsel/kernels.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace obsel {

double PosteriorSummary::det() const { return std::exp(logdet); }

Eigen::MatrixXd assemble_G(const AffineModel& model, const SensorLibrary& library,
                           std::span<const int> subset, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (subset.empty()) throw NoSensors("empty sensor subset");
  const Eigen::Index m = model.dim_param();
  const Eigen::MatrixXd states =
      FullOrderSolver(model, theta).solve_many(Eigen::MatrixXd::Identity(m, m));
  Eigen::MatrixXd g(static_cast<Eigen::Index>(subset.size()), m);
  for (Eigen::Index c = 0; c < m; ++c) g.col(c) = apply_sensors(library, subset, states.col(c));
  return g;
}

namespace {

PosteriorSummary summarize(const Eigen::MatrixXd& hessian, const Eigen::MatrixXd& whitened_G,
                           const GaussianPrior& prior) {
  const Eigen::Index m = prior.dim();
  // LDL' avoids square roots, so the scalar update 1/(1 + 1) comes out exact
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NotSPD("posterior precision");
  PosteriorSummary out;
  out.cov_post = ldlt.solve(Eigen::MatrixXd::Identity(m, m));
  out.cov_post = 0.5 * (out.cov_post + out.cov_post.transpose()).eval();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.cov_post);
  if (eig.info() != Eigen::Success) throw EigenFailure("posterior covariance");
  out.eigenvalues = eig.eigenvalues().reverse();
  if (!(out.eigenvalues(m - 1) > 0.0)) throw NotSPD("posterior covariance eigenvalue");
  out.trace = out.eigenvalues.sum();
  out.logdet = out.eigenvalues.array().log().sum();
  out.lambda_max = out.eigenvalues(0);

  // inf ||W u|| / ||u||_pr in prior eigen-coordinates u = U D^{1/2} c
  if (whitened_G.rows() >= m) {
    const Eigen::MatrixXd scaled =
        whitened_G * prior.eigenvectors() * prior.eigenvalues().cwiseSqrt().asDiagonal();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
    out.beta = svd.singularValues()(m - 1);
  }
  return out;
}

}  // namespace

PosteriorSummary posterior_from_whitened(const Eigen::MatrixXd& whitened_G, double sigma2,
                                         const GaussianPrior& prior) {
  if (whitened_G.cols() != prior.dim()) throw DimensionMismatch("G columns differ from prior dimension");
  if (whitened_G.rows() == 0) {
    // no data: the posterior is the prior itself, not a round trip through its precision
    PosteriorSummary out;
    out.cov_post = prior.cov();
    out.eigenvalues = prior.eigenvalues();
    out.trace = out.eigenvalues.sum();
    out.logdet = out.eigenvalues.array().log().sum();
    out.lambda_max = out.eigenvalues(0);
    return out;
  }
  const Eigen::MatrixXd hessian = prior.precision() + whitened_G.transpose() * whitened_G / sigma2;
  return summarize(hessian, whitened_G, prior);
}

PosteriorSummary posterior_covariance(const Eigen::MatrixXd& G, const NoiseState& noise,
                                      const GaussianPrior& prior) {
  if (G.rows() != noise.size()) throw DimensionMismatch("G rows differ from the sensor count");
  return posterior_from_whitened(noise.whiten_many(G), noise.sigma2(), prior);
}

Eigen::VectorXd posterior_mean(const Eigen::MatrixXd& G, const NoiseState& noise,
                               const GaussianPrior& prior, const Eigen::Ref<const Eigen::VectorXd>& d) {
  if (G.rows() != noise.size() || d.size() != noise.size())
    throw DimensionMismatch("G rows and data length must equal the sensor count");
  if (G.cols() != prior.dim()) throw DimensionMismatch("G columns differ from prior dimension");
  if (noise.empty()) return prior.mean();
  const Eigen::MatrixXd precision = prior.precision();
  Eigen::MatrixXd hessian = precision;
  Eigen::VectorXd rhs = precision * prior.mean();
  const Eigen::MatrixXd w = noise.whiten_many(G);
  hessian += w.transpose() * w / noise.sigma2();
  rhs += w.transpose() * noise.whiten(d) / noise.sigma2();
  const Eigen::LLT<Eigen::MatrixXd> llt(hessian);
  if (llt.info() != Eigen::Success) throw NotSPD("posterior precision");
  return llt.solve(rhs);
}

Restriction parse_restriction(std::string_view name) {
  if (name == "none") return Restriction::none;
  if (name == "one_per_site") return Restriction::one_per_site;
  throw ConfigInvalid("unknown restriction '" + std::string(name) + "'");
}

std::string_view to_string(Restriction r) {
  return r == Restriction::none ? "none" : "one_per_site";
}

bool admissible(const SensorLibrary& library, std::span<const int> ids, Restriction restriction) {
  std::vector<int> seen_ids;
  std::vector<int> seen_sites;
  for (int id : ids) {
    const int site = library.at(id).site_id;
    if (std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end()) return false;
    if (restriction == Restriction::one_per_site &&
        std::find(seen_sites.begin(), seen_sites.end(), site) != seen_sites.end())
      return false;
    seen_ids.push_back(id);
    seen_sites.push_back(site);
  }
  return true;
}

double combination_count(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (std::size_t i = 1; i <= k; ++i) out = out * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(out);
}

std::vector<std::vector<int>> admissible_combinations(const SensorLibrary& library, int k,
                                                      Restriction restriction, double cap) {
  const auto n = static_cast<int>(library.size());
  if (k < 1 || k > n)
    throw ConfigInvalid("design size " + std::to_string(k) + " for a library of " + std::to_string(n));
  const double count = combination_count(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
  if (count > cap)
    throw TooManyCombinations(std::to_string(count) + " combinations exceed the cap " + std::to_string(cap));

  std::vector<std::vector<int>> out;
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    if (admissible(library, idx, restriction)) out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

DesignTable enumerate_designs(const AffineModel& model, const SensorLibrary& library,
                              const NoiseCovariance& cov, const GaussianPrior& prior,
                              const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const EnumerationOptions& options) {
  const auto designs = admissible_combinations(library, options.k, options.restriction, options.cap);

  std::vector<int> all(library.size());
  std::iota(all.begin(), all.end(), 0);
  DesignInputs inputs;
  inputs.unit_obs = assemble_G(model, library, all, theta);
  inputs.eig_obs = inputs.unit_obs * prior.eigenvectors();
  inputs.cov = &cov;
  inputs.prior = &prior;
  inputs.sigma2 = options.sigma2;

  auto rows = evaluate_designs(options.policy, inputs, designs);
  DesignTable table;
  table.rows.reserve(rows.size());
  for (auto& row : rows) {
    if (row)
      table.rows.push_back(std::move(*row));
    else
      ++table.singular_skipped;
  }
  if (table.rows.empty()) throw NoSensors("every admissible design has a singular noise covariance");

  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (r.trace < table.rows[table.argmin_trace].trace) table.argmin_trace = i;
    if (r.logdet < table.rows[table.argmin_logdet].logdet) table.argmin_logdet = i;
    if (r.lambda_max < table.rows[table.argmin_lambda_max].lambda_max) table.argmin_lambda_max = i;
    if (r.beta > table.rows[table.argmax_beta].beta) table.argmax_beta = i;
  }
  return table;
}

std::vector<std::vector<int>> random_designs(const SensorLibrary& library, int k, Restriction restriction,
                                             std::size_t count, std::uint64_t seed) {
  const auto n = static_cast<int>(library.size());
  std::vector<std::vector<int>> by_site(static_cast<std::size_t>(library.site_count()));
  std::vector<int> site_ids;
  for (const auto& s : library) {
    if (s.site_id < 0 || s.site_id >= library.site_count())
      throw ConfigInvalid("site ids must be contiguous from 0");
    by_site[static_cast<std::size_t>(s.site_id)].push_back(s.id);
  }
  const int pool = restriction == Restriction::one_per_site ? library.site_count() : n;
  if (k < 1 || k > pool)
    throw ConfigInvalid("design size " + std::to_string(k) + " exceeds " + std::to_string(pool) +
                        " admissible choices");

  std::mt19937_64 rng(seed);
  std::vector<int> order(static_cast<std::size_t>(pool));
  std::vector<std::vector<int>> out;
  out.reserve(count);
  for (std::size_t d = 0; d < count; ++d) {
    std::iota(order.begin(), order.end(), 0);
    // partial Fisher-Yates over the first k entries
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, pool - 1);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> ids(order.begin(), order.begin() + k);
    if (restriction == Restriction::one_per_site) {
      for (int& site : ids) {
        const auto& members = by_site[static_cast<std::size_t>(site)];
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        site = members[pick(rng)];
      }
    }
    std::sort(ids.begin(), ids.end());
    out.push_back(std::move(ids));
  }
  return out;
}

Criterion parse_criterion(std::string_view name) {
  if (name == "trace") return Criterion::trace;
  if (name == "logdet") return Criterion::logdet;
  if (name == "lambda_max") return Criterion::lambda_max;
  if (name == "beta") return Criterion::beta;
  throw ConfigInvalid("unknown criterion '" + std::string(name) + "'");
}

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::trace: return "trace";
    case Criterion::logdet: return "logdet";
    case Criterion::lambda_max: return "lambda_max";
    case Criterion::beta: return "beta";
  }
  return "?";
}

double criterion_value(const DesignRow& row, Criterion c) {
  switch (c) {
    case Criterion::trace: return row.trace;
    case Criterion::logdet: return row.logdet;
    case Criterion::lambda_max: return row.lambda_max;
    case Criterion::beta: return row.beta;
  }
  return 0.0;
}

bool better(Criterion c, double lhs, double rhs) {
  return c == Criterion::beta ? lhs > rhs : lhs < rhs;
}

double percentile_rank(const DesignTable& table, std::span<const int> ids, Criterion criterion) {
  std::vector<int> key(ids.begin(), ids.end());
  std::sort(key.begin(), key.end());
  const auto it = std::find_if(table.rows.begin(), table.rows.end(),
                               [&](const DesignRow& r) { return r.ids == key; });
  if (it == table.rows.end()) throw UnknownDesign("design not present in the table");
  const double value = criterion_value(*it, criterion);
  const auto count = std::count_if(table.rows.begin(), table.rows.end(), [&](const DesignRow& r) {
    return better(criterion, criterion_value(r, criterion), value);
  });
  return static_cast<double>(count) / static_cast<double>(table.rows.size());
}

namespace {

Eigen::VectorXd average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Eigen::VectorXd ranks(static_cast<Eigen::Index>(n));
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks(static_cast<Eigen::Index>(order[t])) = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double rank_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionMismatch("rank correlation inputs");
  Eigen::VectorXd rx = average_ranks(x);
  Eigen::VectorXd ry = average_ranks(y);
  rx.array() -= rx.mean();
  ry.array() -= ry.mean();
  const double denom = rx.norm() * ry.norm();
  return denom > 0.0 ? rx.dot(ry) / denom : 0.0;
}

}  // namespace obsel
