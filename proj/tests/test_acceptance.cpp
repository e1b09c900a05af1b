// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails. Expected values come from dense oracles written
// here, never from the library under test.

#include "obsel/errors.hpp"
#include "obsel/experiment.hpp"
#include "obsel/observability.hpp"
#include "obsel/verification.hpp"
#include "support.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace obsel;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    std::random_device rd;
    fs::path p = fs::temp_directory_path() / ("obsel_acceptance_" + std::to_string(rd()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

fs::path config_path(const std::string& name) { return fs::path(OBSEL_SOURCE_DIR) / "configs" / name; }

const Experiment& default_experiment() {
  static const std::unique_ptr<Experiment> exp =
      std::make_unique<Experiment>(load_config(config_path("default.yaml")));
  return *exp;
}

RunOptions scratch_options(const std::string& sub) {
  RunOptions ro;
  ro.out = scratch_dir() / sub;
  return ro;
}

// The default RB, trained once; criterion 7 times the training itself.
std::optional<ReducedBasis>& default_rb() {
  static std::optional<ReducedBasis> rb;
  return rb;
}

Eigen::VectorXd random_theta(const ParameterBox& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd t(box.dim());
  for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = box.lower(i) + u(rng) * (box.upper(i) - box.lower(i));
  return t;
}

std::vector<int> all_ids(const SensorLibrary& lib) {
  std::vector<int> ids(lib.size());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

NoiseState state_for(const NoiseCovariance& cov, const std::vector<int>& ids, double sigma2) {
  NoiseState s(sigma2);
  for (int id : ids) s = cholesky_expand(s, cov, id);
  return s;
}

Eigen::MatrixXd pick_rows(const Eigen::MatrixXd& g, const std::vector<int>& ids) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), g.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = g.row(ids[i]);
  return out;
}

// (G' C^{-1} G / sigma2 + P^{-1})^{-1} with explicit inverses
Eigen::MatrixXd dense_posterior(const Eigen::MatrixXd& g, const Eigen::MatrixXd& c, double sigma2,
                                const Eigen::MatrixXd& prior_cov) {
  Eigen::MatrixXd h = prior_cov.inverse();
  if (g.rows() > 0) h += g.transpose() * c.inverse() * g / sigma2;
  return h.inverse();
}

Eigen::VectorXd descending_eigenvalues(const Eigen::MatrixXd& a) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

// Spearman correlation with average ranks for ties.
std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto& exp = default_experiment();
  const auto& lib = exp.library();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int steps = 0;
  for (int chain = 0; chain < 200; ++chain) {
    const int k = 2 + static_cast<int>(rng() % 14);
    auto ids = random_designs(lib, k, Restriction::one_per_site, 1, rng()).front();
    std::shuffle(ids.begin(), ids.end(), rng);
    NoiseState s;
    std::vector<int> prefix;
    for (int id : ids) {
      s = cholesky_expand(s, exp.cov(), id);
      prefix.push_back(id);
      const Eigen::MatrixXd full = exp.cov().matrix(prefix);
      const Eigen::MatrixXd ref = Eigen::LLT<Eigen::MatrixXd>(full).matrixL();
      worst = std::max(worst, (s.chol() - ref).cwiseAbs().maxCoeff());
      ++steps;
    }
  }

  // timing of one expansion step on a synthetic library of distinct sites
  std::vector<Sensor> sensors;
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j)
      sensors.push_back(testing::sensor_at(static_cast<int>(sensors.size()), i / 60.0, j / 60.0,
                                           static_cast<int>(sensors.size())));
  std::shuffle(sensors.begin(), sensors.end(), rng);
  VariogramKernel kernel;
  kernel.distance_scale = 70.0;
  // all sizes keep the factors out of cache, where small K would run faster per entry
  const std::vector<int> sizes{400, 800, 1600};
  std::vector<double> scaled;
  std::string times;
  for (int k : sizes) {
    const std::vector<Sensor> base(sensors.begin(), sensors.begin() + k);
    Eigen::MatrixXd c(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) c(i, j) = kernel_eval(kernel, base[static_cast<std::size_t>(i)], base[static_cast<std::size_t>(j)]);
    const NoiseState s(base, c);
    const Sensor& next = sensors[static_cast<std::size_t>(k)];
    double best = 1e300;
    for (int rep = 0; rep < 15; ++rep) {
      const auto t0 = Clock::now();
      const NoiseState t = cholesky_expand(s, kernel, next);
      const double dt = seconds_since(t0);
      if (t.size() != k + 1) return {false, "expansion size mismatch"};
      best = std::min(best, dt);
    }
    scaled.push_back(best / (static_cast<double>(k) * k));
    times += " K=" + std::to_string(k) + ":" + fmt(best * 1e6) + "us";
  }
  const double spread = *std::max_element(scaled.begin(), scaled.end()) /
                        *std::min_element(scaled.begin(), scaled.end());
  const bool pass = worst <= 1e-10 && spread <= 4.0;
  return {pass, "200 chains, " + std::to_string(steps) + " steps, max |chol - LLT| " + fmt(worst) +
                    "; step time / K^2 spread " + fmt(spread) + " (<= 4)," + times};
}

Outcome criterion2() {
  const auto& exp = default_experiment();
  std::mt19937_64 rng(202);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  double min_gain = 1e300;
  for (int rep = 0; rep < 500; ++rep) {
    const int k = 1 + static_cast<int>(rng() % 15);
    auto ids = random_designs(exp.library(), k, Restriction::one_per_site, 1, rng()).front();
    std::shuffle(ids.begin(), ids.end(), rng);
    Eigen::VectorXd d(k);
    for (int i = 0; i < k; ++i) d(i) = normal(rng);
    const std::vector<int> head(ids.begin(), ids.end() - 1);
    const NoiseState s = state_for(exp.cov(), head, 1.0);
    const double gain = observability_gain(s, exp.cov(), ids.back(), d(k - 1), s.whiten(d.head(k - 1)));

    const MatrixXld full = exp.cov().matrix(ids).cast<long double>();
    const VectorXld dl = d.cast<long double>();
    long double ref = dl.dot(full.llt().solve(dl));
    if (k > 1) {
      const MatrixXld top = full.topLeftCorner(k - 1, k - 1);
      ref -= dl.head(k - 1).dot(top.llt().solve(dl.head(k - 1)));
    }
    worst = std::max(worst, std::abs(gain - static_cast<double>(ref)) / static_cast<double>(std::abs(ref)));
    min_gain = std::min(min_gain, gain);
  }
  return {worst <= 1e-9 && min_gain >= 0.0,
          "500 cases, max relative error " + fmt(worst) + ", min gain " + fmt(min_gain)};
}

Outcome criterion3() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> expo(-2.0, 2.0);
  double worst_cov = 0.0, worst_mean = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 5);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 12);
    const double sigma2 = std::pow(10.0, expo(rng));
    const Eigen::MatrixXd g = testing::random_matrix(k, m, rng);
    const Eigen::MatrixXd c = testing::random_spd(k, rng);
    const Eigen::MatrixXd p = testing::random_spd(m, rng);
    const Eigen::VectorXd mu = testing::random_vector(m, rng);
    const Eigen::VectorXd d = testing::random_vector(k, rng);
    const GaussianPrior prior(mu, p);
    const NoiseState noise = testing::noise_state(c, sigma2);

    const Eigen::MatrixXd ref = dense_posterior(g, c, sigma2, p);
    const Eigen::VectorXd ref_mean = ref * (g.transpose() * c.inverse() * d / sigma2 + p.inverse() * mu);
    worst_cov = std::max(worst_cov, testing::rel_err(posterior_covariance(g, noise, prior).cov_post, ref));
    worst_mean = std::max(worst_mean, testing::rel_err(posterior_mean(g, noise, prior, d), ref_mean));
  }

  bool prior_kept = true;
  for (Eigen::Index m = 1; m <= 5; ++m) {
    const GaussianPrior prior(Eigen::VectorXd::Zero(m), testing::random_spd(m, rng));
    const auto s = posterior_covariance(Eigen::MatrixXd(0, m), NoiseState(0.5), prior);
    prior_kept = prior_kept && s.cov_post == prior.cov();
  }

  const GaussianPrior unit(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  const double scalar =
      posterior_covariance(Eigen::MatrixXd::Ones(1, 1), testing::noise_state(Eigen::MatrixXd::Ones(1, 1)), unit)
          .cov_post(0, 0);

  const bool pass = worst_cov <= 1e-9 && worst_mean <= 1e-9 && prior_kept && scalar == 0.5;
  return {pass, "200 cases, covariance " + fmt(worst_cov) + ", mean " + fmt(worst_mean) +
                    ", K=0 keeps prior " + (prior_kept ? "yes" : "no") + ", scalar " + fmt(scalar)};
}

Outcome criterion4() {
  const auto& exp = default_experiment();
  const auto& model = exp.model();
  const auto& prior = exp.prior();
  const auto& lib = exp.library();
  const auto ids_all = all_ids(lib);
  const double lmax_pr = prior.eigenvalues()(0);
  const Eigen::MatrixXd precision = prior.cov().inverse();
  std::mt19937_64 rng(404);
  int instances = 0, violations = 0;
  double worst_ratio = 0.0, worst_identity = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd theta = random_theta(model.box, rng);
    const Eigen::MatrixXd g_all = assemble_G(model, lib, ids_all, theta);
    const Eigen::MatrixXd eig_all = g_all * prior.eigenvectors();
    for (int rep = 0; rep < 2; ++rep) {
      const int k = 1 + static_cast<int>(rng() % 15);
      const auto ids = random_designs(lib, k, Restriction::one_per_site, 1, rng()).front();
      const Eigen::MatrixXd g = pick_rows(g_all, ids);
      const Eigen::MatrixXd c = exp.cov().matrix(ids);
      const Eigen::LLT<Eigen::MatrixXd> c_llt(c);
      for (double sigma2 : {0.01, 1.0, 100.0}) {
        const NoiseState noise = state_for(exp.cov(), ids, sigma2);
        const auto summary = posterior_covariance(g, noise, prior);
        const double beta =
            observability_from_observations(pick_rows(eig_all, ids), noise, prior, Eigen::MatrixXd(),
                                            ObservabilityVariant::beta_G, false)
                .beta;
        const double bound = lmax_pr / (beta * beta / sigma2 + 1.0);
        const double ratio = summary.lambda_max / bound;
        worst_ratio = std::max(worst_ratio, ratio);
        if (ratio > 1.0 + 1e-12) ++violations;

        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(summary.cov_post);
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
          const Eigen::VectorXd u = es.eigenvectors().col(i);
          const Eigen::VectorXd gu = g * u;
          const double rhs = gu.dot(c_llt.solve(gu)) / sigma2 + u.dot(precision * u);
          const double lhs = 1.0 / es.eigenvalues()(i);
          worst_identity = std::max(worst_identity, std::abs(lhs - rhs) / rhs);
        }
        ++instances;
      }
    }
  }
  const bool pass = instances >= 500 && violations == 0 && worst_identity <= 1e-8;
  return {pass, std::to_string(instances) + " instances, " + std::to_string(violations) +
                    " bound violations, max lambda_max / bound " + fmt(worst_ratio) +
                    ", eigenpair identity error " + fmt(worst_identity)};
}

Outcome criterion5() {
  const auto& exp = default_experiment();
  const auto& model = exp.model();
  const auto& prior = exp.prior();
  const auto& lib = exp.library();
  const auto ids_all = all_ids(lib);
  const Eigen::Index m = prior.dim();
  std::mt19937_64 rng(505);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::VectorXd theta = random_theta(model.box, rng);
    const int k = static_cast<int>(m) + static_cast<int>(rng() % (16 - static_cast<std::uint64_t>(m)));
    const auto ids = random_designs(lib, k, Restriction::one_per_site, 1, rng()).front();
    const NoiseState noise = state_for(exp.cov(), ids, exp.sigma2());
    const double beta =
        observability(model, nullptr, noise, theta, prior, ObservabilityVariant::beta_G, false, false).beta;
    const double ref = testing::oracle_beta(exp.cov().matrix(ids), assemble_G(model, lib, ids, theta), prior.cov());
    worst = std::max(worst, std::abs(beta - ref) / ref);
  }

  bool zero_below = true;
  for (int rep = 0; rep < 20; ++rep) {
    const int k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(m - 1));
    const auto ids = random_designs(lib, k, Restriction::one_per_site, 1, rng()).front();
    const NoiseState noise = state_for(exp.cov(), ids, exp.sigma2());
    const auto r = observability(model, nullptr, noise, random_theta(model.box, rng), prior,
                                 ObservabilityVariant::beta_G, false, false);
    zero_below = zero_below && r.beta == 0.0;
  }

  int drops = 0;
  double worst_drop = 0.0;
  for (int chain = 0; chain < 50; ++chain) {
    const Eigen::VectorXd theta = random_theta(model.box, rng);
    const Eigen::MatrixXd eig_all = assemble_G(model, lib, ids_all, theta) * prior.eigenvectors();
    auto ids = random_designs(lib, 15, Restriction::one_per_site, 1, rng()).front();
    std::shuffle(ids.begin(), ids.end(), rng);
    NoiseState noise(exp.sigma2());
    std::vector<int> prefix;
    double previous = 0.0;
    for (int id : ids) {
      noise = cholesky_expand(noise, exp.cov(), id);
      prefix.push_back(id);
      const double beta = observability_from_observations(pick_rows(eig_all, prefix), noise, prior,
                                                          Eigen::MatrixXd(), ObservabilityVariant::beta_G, false)
                              .beta;
      const double drop = (previous - beta) / std::max(previous, 1e-300);
      worst_drop = std::max(worst_drop, drop);
      if (beta < previous * (1.0 - 1e-12)) ++drops;
      previous = beta;
    }
  }
  const bool pass = worst <= 1e-8 && zero_below && drops == 0;
  return {pass, "200 oracle cases, max relative error " + fmt(worst) + "; K < M gives zero " +
                    (zero_below ? "yes" : "no") + "; 50 chains, " + std::to_string(drops) + " decreases"};
}

Outcome criterion6() {
  const auto& exp = default_experiment();
  const auto& model = exp.model();
  const auto& prior = exp.prior();
  const auto& lib = exp.library();
  const Eigen::Index m = prior.dim();
  const Eigen::MatrixXd precision = prior.cov().inverse();
  std::mt19937_64 rng(606);
  int violations = 0;
  double worst_lower = -1e300, worst_upper = -1e300, worst_oracle = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::VectorXd theta = random_theta(model.box, rng);
    const int k = 1 + static_cast<int>(rng() % 15);
    const auto ids = random_designs(lib, k, Restriction::one_per_site, 1, rng()).front();
    const NoiseState noise = state_for(exp.cov(), ids, exp.sigma2());
    using V = ObservabilityVariant;
    const double alpha = observability(model, nullptr, noise, theta, prior, V::alpha_W, false, false).beta;
    const double beta = observability(model, nullptr, noise, theta, prior, V::beta_G, false, false).beta;
    const double gamma = continuity_constant(model, noise);
    const EtaExtremes eta = eta_extremes(model, theta, prior);

    const double lower = alpha * eta.eta_min;
    const double upper = gamma * eta.eta_max;
    worst_lower = std::max(worst_lower, (lower - beta) / std::max(beta, 1e-300));
    worst_upper = std::max(worst_upper, (beta - upper) / upper);
    if (lower > beta * (1.0 + 1e-10) || beta > upper * (1.0 + 1e-10)) ++violations;

    // dense oracles for gamma and eta
    const Eigen::MatrixXd lrows = lib.rows(ids, model.dim_state());
    const Eigen::MatrixXd z = model.x_factor->solve(Eigen::MatrixXd(lrows.transpose()));
    const Eigen::MatrixXd c = exp.cov().matrix(ids);
    const Eigen::MatrixXd ci = testing::sym_sqrt(c).inverse();
    const double gamma_ref = std::sqrt(descending_eigenvalues(ci * (lrows * z) * ci)(0));
    const Eigen::MatrixXd states = FullOrderSolver(model, theta).solve_many(Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd gram = states.transpose() * (model.x_inner * states);
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ge(gram, precision, Eigen::EigenvaluesOnly);
    const double eta_min_ref = std::sqrt(ge.eigenvalues()(0));
    const double eta_max_ref = std::sqrt(ge.eigenvalues()(m - 1));
    worst_oracle = std::max({worst_oracle, std::abs(gamma - gamma_ref) / gamma_ref,
                             std::abs(eta.eta_min - eta_min_ref) / eta_min_ref,
                             std::abs(eta.eta_max - eta_max_ref) / eta_max_ref});
  }
  const bool pass = violations == 0 && worst_oracle <= 1e-8;
  return {pass, "100 cases, " + std::to_string(violations) + " violations, worst relative excess lower " +
                    fmt(worst_lower) + " upper " + fmt(worst_upper) + ", gamma/eta oracle error " +
                    fmt(worst_oracle)};
}

Outcome criterion7() {
  const auto t0 = Clock::now();
  const auto& exp = default_experiment();
  const auto& model = exp.model();
  const auto& prior = exp.prior();
  const auto& lib = exp.library();
  default_rb() = obtain_reduced_basis(exp, scratch_options("rb_default"));
  const ReducedBasis& rb = *default_rb();
  const bool trained = rb.tolerance == 1e-4 && rb.achieved <= 1e-4;

  std::mt19937_64 rng(707);
  int pairs = 0, failed_margins = 0;
  double worst_margin = 1e300, eps_max = 0.0;
  std::string worst_name;
  bool eps_certified = true;
  for (int rep = 0; rep < 25; ++rep) {
    const Eigen::VectorXd theta = random_theta(model.box, rng);
    const int k = 5 + static_cast<int>(rng() % 11);
    const auto ids = random_designs(lib, k, Restriction::one_per_site, 1, rng()).front();
    const NoiseState noise = state_for(exp.cov(), ids, exp.sigma2());
    const SandwichMargins sm = surrogate_sandwich(model, rb, noise, prior, theta);
    eps_max = std::max(eps_max, sm.eps);
    eps_certified = eps_certified && sm.eps <= certified_relative_accuracy(rb, theta);
    for (const auto& [name, margin] : sm.margins) {
      if (margin < worst_margin) {
        worst_margin = margin;
        worst_name = name;
      }
      if (margin < 0.0) ++failed_margins;
    }
    ++pairs;
  }

  int violations = 0;
  double worst_effectivity = 1e300;
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::VectorXd theta = random_theta(model.box, rng);
    Eigen::VectorXd u(prior.dim());
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
    const RbSolution sol = rb_solve(rb, theta, u);
    const Eigen::VectorXd x = solve(model, theta, u);
    const double err = std::sqrt(model.x_norm_sq(x - rb.reconstruct(sol.coefficients)));
    if (err > sol.error_bound) ++violations;
    worst_effectivity = std::min(worst_effectivity, sol.error_bound / std::max(err, 1e-300));
  }
  const double elapsed = seconds_since(t0);
  const bool pass = trained && pairs >= 20 && failed_margins == 0 && eps_certified && violations == 0 &&
                    elapsed <= 300.0;
  return {pass, "RB size " + std::to_string(rb.size()) + " bound " + fmt(rb.achieved) + "; " +
                    std::to_string(pairs) + " pairs, measured eps up to " + fmt(eps_max) +
                    ", min margin " + fmt(worst_margin) + " (" + worst_name + "); 100 solves, " +
                    std::to_string(violations) + " certification violations, min bound/error " +
                    fmt(worst_effectivity) + "; " + fmt(elapsed) + " s"};
}

Outcome criterion8() {
  const Experiment exp(load_config(config_path("desk12.yaml")));
  const Experiment ref_exp(load_config(config_path("desk12_reference.yaml")));
  const auto& model = exp.model();
  const auto& lib = exp.library();
  const auto& prior = exp.prior();
  const Eigen::VectorXd theta = exp.enumeration_theta();

  bool same_library = lib.size() == ref_exp.library().size();
  for (std::size_t i = 0; same_library && i < lib.size(); ++i)
    same_library = lib.at(static_cast<int>(i)).location == ref_exp.library().at(static_cast<int>(i)).location;
  same_library = same_library && (theta - ref_exp.model().theta_ref).norm() == 0.0;

  EnumerationOptions eo;
  eo.k = 4;
  eo.sigma2 = exp.sigma2();
  const DesignTable table = enumerate_designs(model, lib, exp.cov(), prior, theta, eo);

  // (a) every row against the dense oracle, optima by a fresh scan
  const Eigen::MatrixXd g_all = assemble_G(model, lib, all_ids(lib), theta);
  double worst = 0.0;
  std::vector<double> beta, trace, logdet, lmax;
  for (const auto& row : table.rows) {
    const Eigen::MatrixXd g = pick_rows(g_all, row.ids);
    const Eigen::MatrixXd c = exp.cov().matrix(row.ids);
    const Eigen::VectorXd ev = descending_eigenvalues(dense_posterior(g, c, exp.sigma2(), prior.cov()));
    const double b = testing::oracle_beta(c, g, prior.cov());
    worst = std::max({worst, std::abs(row.trace - ev.sum()) / ev.sum(),
                      std::abs(row.logdet - ev.array().log().sum()) / std::abs(ev.array().log().sum()),
                      std::abs(row.lambda_max - ev(0)) / ev(0), std::abs(row.beta - b) / b});
    beta.push_back(row.beta);
    trace.push_back(row.trace);
    logdet.push_back(row.logdet);
    lmax.push_back(row.lambda_max);
  }
  auto argmin = [](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
  };
  const std::size_t best_beta = static_cast<std::size_t>(std::max_element(beta.begin(), beta.end()) - beta.begin());
  const bool optima = table.argmin_trace == argmin(trace) && table.argmin_logdet == argmin(logdet) &&
                      table.argmin_lambda_max == argmin(lmax) && table.argmax_beta == best_beta;
  const bool part_a = table.rows.size() == 495 && table.singular_skipped == 0 && worst <= 1e-8 && optima;

  auto beta_fraction_above = [&](std::vector<int> ids) {
    std::sort(ids.begin(), ids.end());
    const auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const DesignRow& r) { return r.ids == ids; });
    if (it == table.rows.end()) return 1.0;
    const double above = static_cast<double>(
        std::count_if(table.rows.begin(), table.rows.end(), [&](const DesignRow& r) { return r.beta > it->beta; }));
    return above / static_cast<double>(table.rows.size());
  };
  auto ids_text = [](const std::vector<int>& ids) {
    std::string s;
    for (int id : ids) s += (s.empty() ? "" : ",") + std::to_string(id);
    return "{" + s + "}";
  };

  // (b) training on the reference configuration, full order
  const RunOptions ro_ref = scratch_options("desk12_reference");
  const SelectionConfig sc_ref = selection_config(ref_exp, ro_ref);
  const SelectionResult res_ref =
      sensor_selection(ref_exp.model(), nullptr, ref_exp.library(), ref_exp.cov(), ref_exp.prior(), sc_ref);
  const double pct_ref = beta_fraction_above(res_ref.noise.ids());
  const bool part_b = sc_ref.train_set.size() == 1 && (sc_ref.train_set.front() - theta).norm() == 0.0 &&
                      static_cast<int>(res_ref.noise.size()) == 4 && pct_ref <= 0.05;

  // (c) training over the grid
  const RunOptions ro = scratch_options("desk12");
  const SelectionConfig sc = selection_config(exp, ro);
  std::optional<ReducedBasis> rb;
  if (exp.config().selection.use_rom) rb = obtain_reduced_basis(exp, ro);
  const SelectionResult res = sensor_selection(model, rb ? &*rb : nullptr, lib, exp.cov(), prior, sc);
  const double pct_grid = beta_fraction_above(res.noise.ids());
  const bool part_c = sc.train_set.size() >= 512 && static_cast<int>(res.noise.size()) == 4 && pct_grid <= 0.15;

  // (d) rank correlation of beta with the negated criteria
  auto negated = [](std::vector<double> v) {
    for (auto& x : v) x = -x;
    return v;
  };
  const double rho_e = spearman(beta, negated(lmax));
  const double rho_a = spearman(beta, negated(trace));
  const double rho_d = spearman(beta, negated(logdet));
  const bool part_d = rho_e >= 0.8 && rho_e >= rho_a && rho_e >= rho_d;

  const bool pass = same_library && part_a && part_b && part_c && part_d;
  return {pass, std::string("(a) ") + (part_a ? "ok" : "fail") + " " + std::to_string(table.rows.size()) +
                    " designs, oracle error " + fmt(worst) + "; (b) " + (part_b ? "ok" : "fail") + " " +
                    ids_text(res_ref.noise.ids()) + " beta fraction above " + fmt(pct_ref) + "; (c) " +
                    (part_c ? "ok" : "fail") + " " + std::to_string(sc.train_set.size()) + " points " +
                    ids_text(res.noise.ids()) + " fraction above " + fmt(pct_grid) + "; (d) " +
                    (part_d ? "ok" : "fail") + " spearman E " + fmt(rho_e) + " A " + fmt(rho_a) + " D " +
                    fmt(rho_d)};
}

Outcome criterion9() {
  const auto& exp = default_experiment();
  const auto& model = exp.model();
  const auto& prior = exp.prior();
  const auto& lib = exp.library();
  if (!default_rb()) default_rb() = obtain_reduced_basis(exp, scratch_options("rb_default"));
  const SelectionConfig sc = selection_config(exp, scratch_options("default"));
  const bool setup = sc.k_max == 10 && sc.restriction == Restriction::one_per_site && lib.size() == 500;
  const ReducedBasis* rb = exp.config().selection.use_rom ? &*default_rb() : nullptr;
  const SelectionResult res = sensor_selection(model, rb, lib, exp.cov(), prior, sc);
  const auto selected = res.noise.ids();
  const bool budget = res.full_solves == 10 && res.trace.size() == 10 && selected.size() == 10 &&
                      admissible(lib, selected, Restriction::one_per_site);

  const Eigen::MatrixXd g_all = assemble_G(model, lib, all_ids(lib), model.theta_ref);
  auto eigenvalues = [&](const std::vector<int>& ids) {
    return descending_eigenvalues(
        dense_posterior(pick_rows(g_all, ids), exp.cov().matrix(ids), exp.sigma2(), prior.cov()));
  };
  const Eigen::VectorXd chosen = eigenvalues(selected);
  const auto designs = random_designs(lib, 10, Restriction::one_per_site, 5000, 909);
  std::vector<int> at_least(static_cast<std::size_t>(prior.dim()), 0);
  for (const auto& ids : designs) {
    const Eigen::VectorXd ev = eigenvalues(ids);
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (ev(i) >= chosen(i)) ++at_least[static_cast<std::size_t>(i)];
  }
  double min_fraction = 1.0;
  std::string fractions;
  for (int c : at_least) {
    const double f = c / static_cast<double>(designs.size());
    min_fraction = std::min(min_fraction, f);
    fractions += " " + fmt(f);
  }
  const bool pass = setup && budget && designs.size() == 5000 && min_fraction >= 0.95;
  return {pass, "full-order solves " + std::to_string(res.full_solves) + ", min beta " +
                    fmt(res.trace.empty() ? 0.0 : res.trace.back().beta_min) +
                    "; fraction of 5000 random designs with a larger or equal eigenvalue per index:" + fractions};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion10() {
  int compared = 0;
  std::vector<std::string> differing;
  bool ran = true;
  for (const std::string name : {"desk12.yaml", "default.yaml"}) {
    std::vector<fs::path> dirs;
    for (const std::string threads : {"1", "2"}) {
      const fs::path out = scratch_dir() / ("cli_" + name + "_" + threads);
      dirs.push_back(out);
      for (const std::string cmd : {"select", "enumerate"}) {
        const std::string line = std::string("\"") + OBSEL_CLI + "\" " + cmd + " --config \"" +
                                 config_path(name).string() + "\" --out \"" + out.string() +
                                 "\" --threads " + threads + " > /dev/null 2>&1";
        ran = ran && std::system(line.c_str()) == 0;
      }
    }
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      if (entry.path().extension() != ".csv") continue;
      const fs::path other = dirs[1] / entry.path().filename();
      if (!fs::exists(other) || read_file(entry.path()) != read_file(other))
        differing.push_back(name + ":" + entry.path().filename().string());
      ++compared;
    }
  }
  std::string detail = std::to_string(compared) + " CSV files compared across two runs per config";
  for (const auto& d : differing) detail += ", differs " + d;
  if (!ran) detail += ", a CLI run failed";
  return {ran && compared >= 4 && differing.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                       criterion5, criterion6, criterion7, criterion8,
                                                       criterion9, criterion10};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
              << fmt(seconds_since(t0)) << " s]" << std::endl;
    if (!o.pass) ++failed;
  }
  std::error_code ec;
  fs::remove_all(scratch_dir(), ec);
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
