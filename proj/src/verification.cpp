#include "obsel/verification.hpp"

#include "obsel/errors.hpp"
#include "obsel/io.hpp"
#include "obsel/linalg.hpp"
#include "obsel/observability.hpp"
#include "obsel/posterior.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <set>

namespace obsel {

namespace {

/// Slack allowed below zero for bounds that hold with equality in exact
/// arithmetic.
constexpr double kRoundoff = 1e-9;

class Tally {
 public:
  explicit Tally(std::string name, double floor = 0.0) : floor_(floor) { result_.name = std::move(name); }

  void add(double margin) {
    if (result_.instances == 0 || margin < result_.margin) result_.margin = margin;
    ++result_.instances;
  }
  CheckResult done(std::string detail = {}) {
    result_.passed = result_.instances > 0 && result_.margin >= floor_;
    result_.detail = std::move(detail);
    return result_;
  }

 private:
  CheckResult result_;
  double floor_;
};

/// Margin of |a - b| <= tol * scale.
double closeness(double err, double tol, double scale) { return 1.0 - err / (tol * std::max(scale, 1e-300)); }

Eigen::VectorXd random_theta(const ParameterBox& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd t(box.dim());
  for (Eigen::Index q = 0; q < box.dim(); ++q) t(q) = box.lower(q) + (box.upper(q) - box.lower(q)) * unit(rng);
  return t;
}

/// Sensors at distinct sites in random order, so the noise covariance stays SPD.
std::vector<int> random_chain(const SensorLibrary& library, int k, std::mt19937_64& rng) {
  auto ids = random_designs(library, k, Restriction::one_per_site, 1, rng()).front();
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

NoiseState noise_for(const NoiseCovariance& cov, const std::vector<int>& ids, double sigma2) {
  NoiseState s(sigma2);
  for (int id : ids) s = cholesky_expand(s, cov, id);
  return s;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& ids) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(ids[i]);
  return out;
}

/// Smallest singular value of chol^{-1} G U_r D_r^{1/2}, from an SVD.
double svd_beta(const NoiseState& noise, const Eigen::MatrixXd& g, const GaussianPrior& prior, Eigen::Index r) {
  const Eigen::MatrixXd scaled = noise.whiten_many(g) * prior.eigenvectors().leftCols(r) *
                                 prior.eigenvalues().head(r).cwiseSqrt().asDiagonal();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
  if (scaled.rows() < r) return 0.0;
  return svd.singularValues()(r - 1);
}

struct Sample {
  Eigen::VectorXd theta;
  Eigen::MatrixXd unit_obs;  // all library sensors x M
};

}  // namespace

Fault parse_fault(std::string_view name) {
  if (name == "none") return Fault::none;
  if (name == "asymmetric_covariance") return Fault::asymmetric_covariance;
  if (name == "empty_selection") return Fault::empty_selection;
  throw ConfigInvalid("unknown fault '" + std::string(name) + "'");
}

double measured_relative_error(const AffineModel& model, const ReducedBasis& rb,
                               const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(model.dim_param(), model.dim_param());
  const Eigen::MatrixXd states = FullOrderSolver(model, theta).solve_many(id);
  const Eigen::MatrixXd err = states - rb.basis * rb_solve_batch(rb, theta, id).coefficients;
  const auto eig = generalized_eigen(err.transpose() * (model.x_inner * err),
                                     states.transpose() * (model.x_inner * states));
  return std::sqrt(std::max(eig.values(eig.values.size() - 1), 0.0));
}

SandwichMargins surrogate_sandwich(const AffineModel& model, const ReducedBasis& rb,
                                   const NoiseState& noise, const GaussianPrior& prior,
                                   const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const PriorStates full = full_order_prior_states(model, theta, prior);
  const PriorStates reduced = reduced_prior_states(rb, theta, prior);
  const Eigen::MatrixXd w_full = noise.whiten_many(observe_prior_states(full, noise, nullptr));
  const Eigen::MatrixXd w_rb = noise.whiten_many(observe_prior_states(reduced, noise, &rb));

  SandwichMargins out;
  const Eigen::MatrixXd err = full.states - rb.basis * reduced.states;
  const auto e = generalized_eigen(err.transpose() * (model.x_inner * err), full.gram);
  out.eps = std::sqrt(std::max(e.values(e.values.size() - 1), 0.0));
  out.gamma = continuity_constant(model, noise);
  out.eta_max = eta_extremes_from_states(model, full.states * prior.eigenvectors().transpose(), prior).eta_max;

  using V = ObservabilityVariant;
  const auto a = observability_from_whitened(w_full, prior, full.gram, V::alpha_W, false);
  const auto a_rb = observability_from_whitened(w_rb, prior, reduced.gram, V::alpha_W, false);
  const auto b = observability_from_whitened(w_full, prior, full.gram, V::beta_G, false);
  const auto b_rb = observability_from_whitened(w_rb, prior, reduced.gram, V::beta_G, false);
  out.alpha = a.beta;
  out.alpha_rb = a_rb.beta;
  out.beta = b.beta;
  out.beta_rb = b_rb.beta;

  const double ge = out.gamma * out.eps;
  const double gee = out.gamma * out.eta_max * out.eps;
  auto rel = [](double slack, double scale) { return slack / std::max(scale, 1e-300); };
  auto& m = out.margins;
  m.emplace_back("alpha lower", rel(out.alpha - ((1 - out.eps) * out.alpha_rb - ge), out.alpha + ge));
  m.emplace_back("alpha upper", rel((1 + out.eps) * out.alpha_rb + ge - out.alpha, out.alpha + ge));
  m.emplace_back("beta lower", rel(out.beta - (out.beta_rb - gee), out.beta + gee));
  m.emplace_back("beta upper", rel(out.beta_rb + gee - out.beta, out.beta + gee));

  // surrogate worst directions evaluated with full-order states
  const Eigen::VectorXd& cb = b_rb.worst_coefficients;
  const double ratio_b = (w_full * cb).norm() / std::sqrt((cb.array().square() / prior.eigenvalues().array()).sum());
  m.emplace_back("beta direction lower", rel(ratio_b - out.beta, out.beta) + kRoundoff);
  m.emplace_back("beta direction upper", rel(out.beta + 2 * gee - ratio_b, out.beta + 2 * gee));
  const Eigen::VectorXd& ca = a_rb.worst_coefficients;
  const double ratio_a = (w_full * ca).norm() / std::sqrt(ca.dot(full.gram * ca));
  const double upper_a = out.eps < 1 ? (1 + out.eps) / (1 - out.eps) * (out.alpha + ge) + ge
                                     : std::numeric_limits<double>::infinity();
  m.emplace_back("alpha direction lower", rel(ratio_a - out.alpha, out.alpha) + kRoundoff);
  m.emplace_back("alpha direction upper", rel(upper_a - ratio_a, upper_a));
  return out;
}

CheckResult check_kernel_symmetry(const SensorLibrary& library, const std::function<double(int, int)>& cov) {
  Tally t("kernel symmetry");
  const int n = static_cast<int>(library.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double a = cov(i, j);
      const double b = cov(j, i);
      t.add(closeness(std::abs(a - b), 1e-14, std::max(std::abs(a), std::abs(b))));
    }
  if (n < 2) t.add(1.0);
  return t.done("|cov(i,j) - cov(j,i)| <= 1e-14 |cov(i,j)| over all pairs");
}

std::vector<CheckResult> run_invariant_suite(const Experiment& exp, const VerifyOptions& options) {
  const auto& model = exp.model();
  const auto& library = exp.library();
  const auto& prior = exp.prior();
  const auto& cov = exp.cov();
  const auto& vcfg = exp.config().verify;
  const Eigen::Index m = prior.dim();
  const int k_cap = std::min(vcfg.max_sensors, library.site_count());
  std::mt19937_64 rng(options.seed);
  std::vector<CheckResult> out;

  {
    std::function<double(int, int)> fn = [&](int i, int j) { return cov(i, j); };
    if (options.fault == Fault::asymmetric_covariance)
      fn = [&](int i, int j) { return cov(i, j) * (i < j ? 1.0 + 1e-6 : 1.0); };
    out.push_back(check_kernel_symmetry(library, fn));
  }

  {
    Tally t("cholesky expansion");
    for (int c = 0; c < vcfg.chains; ++c) {
      const auto ids = random_chain(library, k_cap, rng);
      NoiseState s(1.0);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        s = cholesky_expand(s, cov, ids[k]);
        const std::vector<int> head(ids.begin(), ids.begin() + static_cast<long>(k) + 1);
        const Eigen::MatrixXd ref = Eigen::LLT<Eigen::MatrixXd>(cov.matrix(head)).matrixL();
        t.add(closeness((s.chol() - ref).cwiseAbs().maxCoeff(), 1e-10, std::max(1.0, ref.cwiseAbs().maxCoeff())));
      }
    }
    out.push_back(t.done("incremental factor vs from-scratch LLT, 1e-10"));
  }

  {
    Tally t("observability gain");
    std::normal_distribution<double> normal;
    const int cases = 10 * vcfg.chains;
    for (int c = 0; c < cases && k_cap >= 2; ++c) {
      const int k = 2 + static_cast<int>(rng() % static_cast<unsigned>(k_cap - 1));
      const auto ids = random_chain(library, k, rng);
      const std::vector<int> head(ids.begin(), ids.end() - 1);
      const NoiseState s = noise_for(cov, head, 1.0);
      Eigen::VectorXd d(k);
      for (int i = 0; i < k; ++i) d(i) = normal(rng);
      const double gain = observability_gain(s, cov, ids.back(), d(k - 1), s.whiten(d.head(k - 1)));
      const Eigen::MatrixXd full = cov.matrix(ids);
      const double qf_full = d.dot(full.inverse() * d);
      const double qf_head = d.head(k - 1).dot(full.topLeftCorner(k - 1, k - 1).inverse() * d.head(k - 1));
      t.add(std::min(closeness(std::abs(gain - (qf_full - qf_head)), 1e-9, qf_full), gain >= 0 ? 1.0 : -1.0));
    }
    out.push_back(t.done("gain vs dense-inverse difference, 1e-9 relative; gain >= 0"));
  }

  {
    Tally t("prior eigendecomposition");
    const auto& u = prior.eigenvectors();
    const Eigen::MatrixXd rec = u * prior.eigenvalues().asDiagonal() * u.transpose();
    t.add(closeness((rec - prior.cov()).cwiseAbs().maxCoeff(), 1e-12, prior.cov().cwiseAbs().maxCoeff()));
    t.add(closeness((u.transpose() * u - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff(), 1e-12, 1.0));
    for (Eigen::Index i = 0; i + 1 < m; ++i) t.add(prior.eigenvalues()(i) >= prior.eigenvalues()(i + 1) ? 1.0 : -1.0);
    t.add(prior.eigenvalues()(m - 1) > 0 ? 1.0 : -1.0);
    out.push_back(t.done("U diag(lambda) U' = cov and U'U = I to 1e-12; lambda descending and positive"));
  }

  // random hyper-parameters with the observations of every library sensor
  std::vector<Sample> samples;
  std::vector<int> all(library.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  for (int i = 0; i < vcfg.samples; ++i) {
    Sample s;
    s.theta = i == 0 ? model.theta_ref : random_theta(model.box, rng);
    s.unit_obs = assemble_G(model, library, all, s.theta);
    samples.push_back(std::move(s));
  }

  {
    Tally identity("posterior eigenpairs");
    Tally bound("posterior eigenvalue bound", -kRoundoff);
    for (double sigma2 : {1e-2, 1.0, 1e2})
      for (const auto& s : samples)
        for (int rep = 0; rep < 10; ++rep) {
          const int k = 1 + static_cast<int>(rng() % static_cast<unsigned>(k_cap));
          const auto ids = random_chain(library, k, rng);
          const NoiseState noise = noise_for(cov, ids, sigma2);
          const Eigen::MatrixXd g = select_rows(s.unit_obs, ids);
          const PosteriorSummary post = posterior_covariance(g, noise, prior);
          const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(post.cov_post);
          const Eigen::MatrixXd w = noise.whiten_many(g);
          for (Eigen::Index i = 0; i < m; ++i) {
            const Eigen::VectorXd u = eig.eigenvectors().col(i);
            const double rhs = (w * u).squaredNorm() / sigma2 + prior_norm_sq(prior, u);
            identity.add(closeness(std::abs(1.0 / eig.eigenvalues()(i) - rhs), 1e-8, rhs));
          }
          const double limit = prior.eigenvalues()(0) / (post.beta * post.beta / sigma2 + 1.0);
          bound.add((limit - post.lambda_max) / limit);
        }
    out.push_back(identity.done("1/lambda_i = ||G u_i||^2 / sigma2 + ||u_i||_pr^2 to 1e-8"));
    out.push_back(bound.done("lambda_max(post) <= lambda_max(pr) / (beta^2 / sigma2 + 1)"));
  }

  {
    Tally oracle("observability vs SVD");
    Tally zero("observability zero below M");
    Tally mono("observability monotone", -kRoundoff);
    Tally info("posterior monotone", -kRoundoff);
    for (int c = 0; c < vcfg.chains; ++c) {
      const auto& s = samples[static_cast<std::size_t>(c) % samples.size()];
      const auto ids = random_chain(library, k_cap, rng);
      NoiseState noise(exp.sigma2());
      double prev_beta = 0.0;
      Eigen::VectorXd prev_eigs = prior.eigenvalues();
      for (int id : ids) {
        noise = cholesky_expand(noise, cov, id);
        const auto sel = noise.ids();
        const Eigen::MatrixXd g = select_rows(s.unit_obs, sel);
        const Eigen::MatrixXd eig_obs = g * prior.eigenvectors();
        const double unres = observability_from_observations(eig_obs, noise, prior, Eigen::MatrixXd(),
                                                             ObservabilityVariant::beta_G, false).beta;
        const double res = observability_from_observations(eig_obs, noise, prior, Eigen::MatrixXd(),
                                                           ObservabilityVariant::beta_G, true).beta;
        const Eigen::Index k = noise.size();
        if (k < m) {
          zero.add(unres == 0.0 ? 1.0 : -1.0);
        } else {
          const double ref = svd_beta(noise, g, prior, m);
          oracle.add(closeness(std::abs(unres - ref), 1e-8, std::max(ref, 1e-3)));
        }
        const double ref_r = svd_beta(noise, g, prior, std::min(k, m));
        oracle.add(closeness(std::abs(res - ref_r), 1e-8, std::max(ref_r, 1e-3)));
        mono.add((unres - prev_beta) / std::max(unres, 1e-300));
        prev_beta = unres;
        const PosteriorSummary post = posterior_covariance(g, noise, prior);
        info.add(((prev_eigs - post.eigenvalues).array() / prev_eigs.array()).minCoeff());
        prev_eigs = post.eigenvalues;
      }
    }
    out.push_back(oracle.done("restricted and unrestricted beta vs whitened SVD, 1e-8"));
    out.push_back(zero.done("beta = 0 while K < M without restriction"));
    out.push_back(mono.done("unrestricted beta non-decreasing along expansion chains"));
    out.push_back(info.done("posterior eigenvalues non-increasing along expansion chains"));
  }

  if (k_cap >= m) {
    Tally t("decomposition bounds", -kRoundoff);
    for (const auto& s : samples)
      for (int rep = 0; rep < 5; ++rep) {
        const int k = static_cast<int>(m) + static_cast<int>(rng() % static_cast<unsigned>(k_cap - m + 1));
        const auto ids = random_chain(library, k, rng);
        const NoiseState noise = noise_for(cov, ids, exp.sigma2());
        const PriorStates states = full_order_prior_states(model, s.theta, prior);
        const Eigen::MatrixXd obs = select_rows(s.unit_obs, ids) * prior.eigenvectors();
        const double alpha = observability_from_observations(obs, noise, prior, states.gram,
                                                             ObservabilityVariant::alpha_W, false).beta;
        const double beta = observability_from_observations(obs, noise, prior, states.gram,
                                                            ObservabilityVariant::beta_G, false).beta;
        const double gamma = continuity_constant(model, noise);
        const auto eta = eta_extremes_from_states(model, states.states * prior.eigenvectors().transpose(), prior);
        t.add((beta - alpha * eta.eta_min) / beta);
        t.add((gamma * eta.eta_max - beta) / (gamma * eta.eta_max));
      }
    out.push_back(t.done("alpha eta_min <= beta <= gamma eta_max"));
  }

  if (options.rb) {
    const ReducedBasis& rb = *options.rb;
    {
      Tally t("reduced basis certification");
      std::normal_distribution<double> normal;
      for (int i = 0; i < vcfg.rb_solves; ++i) {
        const Eigen::VectorXd theta = random_theta(model.box, rng);
        Eigen::VectorXd u(m);
        for (Eigen::Index j = 0; j < m; ++j) u(j) = normal(rng);
        const RbSolution r = rb_solve(rb, theta, u);
        const Eigen::VectorXd x = solve(model, theta, u);
        const double err = std::sqrt(model.x_norm_sq(x - rb.reconstruct(r.coefficients)));
        t.add((r.error_bound - err) / std::max(r.error_bound, 1e-300));
      }
      for (const auto& s : samples) {
        const double cert = certified_relative_accuracy(rb, s.theta);
        const double meas = measured_relative_error(model, rb, s.theta);
        t.add((cert - meas) / std::max(cert, 1e-300));
      }
      out.push_back(t.done("error bound >= true error on random solves; certified eps >= measured eps"));
    }
    if (k_cap >= m) {
      std::vector<Tally> tallies;
      for (const char* name : {"alpha lower", "alpha upper", "beta lower", "beta upper", "beta direction lower",
                               "beta direction upper", "alpha direction lower", "alpha direction upper"})
        tallies.emplace_back(std::string("surrogate ") + name);
      double eps_max = 0.0;
      for (const auto& s : samples) {
        const int k = static_cast<int>(m) + static_cast<int>(rng() % static_cast<unsigned>(k_cap - m + 1));
        const auto ids = random_chain(library, k, rng);
        const NoiseState noise = noise_for(cov, ids, exp.sigma2());
        const SandwichMargins sm = surrogate_sandwich(model, rb, noise, prior, s.theta);
        eps_max = std::max(eps_max, sm.eps);
        for (std::size_t i = 0; i < tallies.size(); ++i) tallies[i].add(sm.margins[i].second);
      }
      for (auto& t : tallies) out.push_back(t.done("measured eps up to " + format_double(eps_max)));
    }
  }

  {
    RunOptions ro;
    ro.policy = options.policy;
    SelectionConfig sc = selection_config(exp, ro);
    const ReducedBasis* rb = exp.config().selection.use_rom ? options.rb : nullptr;
    const SelectionResult res = sensor_selection(model, rb, library, cov, prior, sc);
    Tally budget("selection budget");
    budget.add(res.full_solves == static_cast<int>(res.trace.size()) ? 1.0 : -1.0);
    for (const auto& step : res.trace) budget.add(step.n_full_solves == step.iteration ? 1.0 : -1.0);
    out.push_back(budget.done("one full-order solve per iteration"));

    Tally admiss("selection admissibility");
    const auto ids = res.noise.ids();
    admiss.add(std::set<int>(ids.begin(), ids.end()).size() == ids.size() ? 1.0 : -1.0);
    admiss.add(admissible(library, ids, sc.restriction) ? 1.0 : -1.0);
    out.push_back(admiss.done("no duplicates, restriction respected"));

    Tally omp("selection local optimality");
    for (const auto& step : res.trace)
      omp.add((step.gain - step.runner_up_gain) / std::max(step.gain, 1e-300));
    out.push_back(omp.done("chosen gain >= every other admissible gain"));

    if (sc.objective == GreedyObjective::beta) {
      Tally mono("selection beta monotone", -kRoundoff);
      for (std::size_t i = 1; i < res.trace.size(); ++i)
        if (res.trace[i - 1].iteration >= m)
          mono.add((res.trace[i].beta_min - res.trace[i - 1].beta_min) / std::max(res.trace[i].beta_min, 1e-300));
      if (res.trace.size() <= static_cast<std::size_t>(m)) mono.add(0.0);
      out.push_back(mono.done("min beta over the training set non-decreasing once K >= M"));
    }
  }

  {
    Tally t("empty selection");
    const NoiseState empty(exp.sigma2());
    if (options.fault == Fault::empty_selection) {
      observability(model, nullptr, empty, model.theta_ref, prior, ObservabilityVariant::beta_G, false);
    }
    try {
      observability(model, nullptr, empty, model.theta_ref, prior, ObservabilityVariant::beta_G, false);
      t.add(-1.0);
    } catch (const NoSensors&) {
      t.add(1.0);
    }
    out.push_back(t.done("observability without sensors raises NoSensors"));
  }
  return out;
}

void print_report(std::ostream& out, const std::vector<CheckResult>& results) {
  int failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "pass " : "FAIL ") << std::left << std::setw(34) << r.name << " margin "
        << std::setw(24) << format_double(r.margin) << " n=" << r.instances;
    if (!r.detail.empty()) out << "  " << r.detail;
    out << '\n';
    if (!r.passed) ++failed;
  }
  out << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " checks passed\n";
}

}  // namespace obsel
