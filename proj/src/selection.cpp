#include "obsel/selection.hpp"

#include "obsel/errors.hpp"
#include "obsel/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <random>
#include <string>

namespace obsel {

std::vector<Eigen::VectorXd> generate_train_set(const ParameterBox& box, const TrainSetSpec& spec) {
  const Eigen::Index p = box.dim();
  std::vector<Eigen::VectorXd> out;
  if (spec.kind == TrainSetSpec::Kind::grid) {
    const int n = spec.n_per_axis;
    if (n < 1) throw ConfigInvalid("grid training set needs at least one point per axis");
    auto coord = [&](Eigen::Index q, int i) {
      if (n == 1) return 0.5 * (box.lower(q) + box.upper(q));
      if (i == n - 1) return box.upper(q);
      return box.lower(q) + (box.upper(q) - box.lower(q)) * i / (n - 1);
    };
    std::vector<int> idx(static_cast<std::size_t>(p), 0);
    while (true) {
      Eigen::VectorXd theta(p);
      for (Eigen::Index q = 0; q < p; ++q) theta(q) = coord(q, idx[static_cast<std::size_t>(q)]);
      out.push_back(std::move(theta));
      Eigen::Index q = p - 1;
      while (q >= 0 && ++idx[static_cast<std::size_t>(q)] == n) idx[static_cast<std::size_t>(q--)] = 0;
      if (q < 0) break;
    }
    return out;
  }
  if (spec.count < 1) throw ConfigInvalid("random training set needs at least one point");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Eigen::VectorXd theta(p);
    for (Eigen::Index q = 0; q < p; ++q) theta(q) = box.lower(q) + (box.upper(q) - box.lower(q)) * unit(rng);
    out.push_back(std::move(theta));
  }
  return out;
}

GreedyObjective parse_greedy_objective(std::string_view name) {
  if (name == "beta") return GreedyObjective::beta;
  if (name == "trace") return GreedyObjective::trace;
  if (name == "logdet") return GreedyObjective::logdet;
  if (name == "lambda_max") return GreedyObjective::lambda_max;
  throw ConfigInvalid("unknown greedy_objective '" + std::string(name) + "'");
}

std::string_view to_string(GreedyObjective objective) {
  switch (objective) {
    case GreedyObjective::beta: return "beta";
    case GreedyObjective::trace: return "trace";
    case GreedyObjective::logdet: return "logdet";
    case GreedyObjective::lambda_max: return "lambda_max";
  }
  return "?";
}

namespace {

/// Library observations of the prior eigenvector states at every training point.
struct PreparedStates {
  std::vector<Eigen::MatrixXd> library_obs;  // K_L x M
  std::vector<Eigen::MatrixXd> grams;
  std::vector<double> leading_norm;  // ||x_theta(U_1)||_X
  int full_solves = 0;
};

PreparedStates prepare(const AffineModel& model, const ReducedBasis* rb, const SensorLibrary& library,
                       const GaussianPrior& prior, const std::vector<Eigen::VectorXd>& train,
                       ExecutionPolicy policy) {
  const auto t_count = train.size();
  PreparedStates out;
  out.library_obs.resize(t_count);
  out.grams.resize(t_count);
  out.leading_norm.resize(t_count);

  Eigen::MatrixXd projected;
  if (rb) {
    projected.resize(static_cast<Eigen::Index>(library.size()), rb->size());
    for (const auto& s : library) projected.row(s.id) = rb->project_sensor(s);
  }
  auto one = [&](std::size_t t) {
    const PriorStates states =
        rb ? reduced_prior_states(*rb, train[t], prior) : full_order_prior_states(model, train[t], prior);
    if (rb) {
      out.library_obs[t] = projected * states.states;
    } else {
      Eigen::MatrixXd obs(static_cast<Eigen::Index>(library.size()), states.states.cols());
      for (const auto& s : library)
        for (Eigen::Index c = 0; c < states.states.cols(); ++c) obs(s.id, c) = s.apply(states.states.col(c));
      out.library_obs[t] = std::move(obs);
    }
    out.grams[t] = states.gram;
    out.leading_norm[t] = std::sqrt(std::max(states.gram(0, 0), 0.0));
  };
  if (policy == ExecutionPolicy::serial) {
    for (std::size_t t = 0; t < t_count; ++t) one(t);
  } else {
    std::vector<std::exception_ptr> errors(t_count);
    const auto n = static_cast<long long>(t_count);
#pragma omp parallel for schedule(dynamic, 4)
    for (long long t = 0; t < n; ++t) {
      try {
        one(static_cast<std::size_t>(t));
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  if (!rb) out.full_solves = static_cast<int>(t_count);
  return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& ids) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(ids[i]);
  return out;
}

double utility(const PosteriorSummary& s, GreedyObjective objective) {
  switch (objective) {
    case GreedyObjective::trace: return s.trace;
    case GreedyObjective::logdet: return s.logdet;
    case GreedyObjective::lambda_max: return s.lambda_max;
    case GreedyObjective::beta: break;
  }
  return 0.0;
}

}  // namespace

SelectionResult sensor_selection(const AffineModel& model, const ReducedBasis* rb,
                                 const SensorLibrary& library, const NoiseCovariance& cov,
                                 const GaussianPrior& prior, const SelectionConfig& config) {
  const auto& train = config.train_set;
  if (train.empty()) throw ConfigInvalid("empty selection training set");
  if (config.k_max < 1) throw ConfigInvalid("k_max must be at least 1");
  if (library.empty()) throw LibraryExhausted("empty sensor library");
  if (prior.dim() != model.dim_param()) throw DimensionMismatch("prior dimension differs from the model");
  for (const auto& theta : train)
    if (!model.box.contains(theta)) throw ConfigInvalid("selection hyper-parameter outside the box");
  if (rb && (rb->dim_state() != model.dim_state() || rb->dim_param() != model.dim_param()))
    throw DimensionMismatch("reduced basis does not match the model");

  using clock = std::chrono::steady_clock;
  const PreparedStates prep = prepare(model, rb, library, prior, train, config.policy);

  SelectionResult result;
  result.noise = NoiseState(config.sigma2);
  result.prep_full_solves = prep.full_solves;

  std::size_t worst = 0;
  for (std::size_t t = 1; t < train.size(); ++t)
    if (prep.leading_norm[t] > prep.leading_norm[worst]) worst = t;
  Eigen::VectorXd u = prior.eigenvectors().col(0);

  std::vector<int> site_used;
  std::vector<double> readings(library.size());
  for (int iter = 1; iter <= config.k_max; ++iter) {
    const auto t0 = clock::now();
    NoiseState& noise = result.noise;

    const Eigen::VectorXd x = solve(model, train[worst], u);
    ++result.full_solves;
    for (const auto& s : library) readings[static_cast<std::size_t>(s.id)] = s.apply(x);
    const Eigen::VectorXd z = noise.whiten(noise.observe(x));

    std::vector<int> candidates;
    for (const auto& s : library) {
      if (noise.contains(s.id)) continue;
      if (config.restriction == Restriction::one_per_site &&
          std::find(site_used.begin(), site_used.end(), s.site_id) != site_used.end())
        continue;
      candidates.push_back(s.id);
    }
    if (candidates.empty())
      throw LibraryExhausted("no admissible candidate left after " + std::to_string(iter - 1) + " sensors");

    const auto gains = sweep_gains(config.policy, noise, cov, candidates, readings, z);
    const auto best = argmax_gain(candidates, gains);
    SelectionStep step;
    step.iteration = iter;
    step.candidates = static_cast<int>(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (std::isnan(gains[i])) step.skipped.push_back(candidates[i]);
    if (config.log && !step.skipped.empty()) {
      *config.log << "iteration " << iter << ": skipped " << step.skipped.size()
                  << " near-singular candidates:";
      for (int id : step.skipped) *config.log << ' ' << id;
      *config.log << '\n';
    }
    if (!best) throw NearSingular("every admissible candidate makes the noise covariance singular");

    const int chosen = candidates[*best];
    step.sensor_id = chosen;
    step.gain = gains[*best];
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (i != *best && !std::isnan(gains[i])) step.runner_up_gain = std::max(step.runner_up_gain, gains[i]);

    Eigen::VectorXd cross(noise.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i)
      cross(i) = cov(noise.sensors()[static_cast<std::size_t>(i)].id, chosen);
    noise.expand(library.at(chosen), cross, cov(chosen, chosen));
    site_used.push_back(library.at(chosen).site_id);

    const std::vector<int> ids = noise.ids();
    std::vector<Eigen::MatrixXd> eig_obs(train.size());
    for (std::size_t t = 0; t < train.size(); ++t) eig_obs[t] = select_rows(prep.library_obs[t], ids);
    result.final_observability =
        observability_sweep(config.policy, eig_obs, prep.grams, noise, prior, config.variant, true);
    for (auto& o : result.final_observability) o.used_surrogate = rb != nullptr;

    const auto& obs = result.final_observability;
    double sum = 0.0;
    worst = 0;
    for (std::size_t t = 0; t < obs.size(); ++t) {
      sum += obs[t].beta;
      if (obs[t].beta < obs[worst].beta) worst = t;
    }
    step.beta_min = obs[worst].beta;
    step.beta_mean = sum / static_cast<double>(obs.size());
    u = obs[worst].worst_u;

    if (config.objective != GreedyObjective::beta) {
      // worst training point by posterior utility, direction of largest posterior variance
      double worst_value = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < train.size(); ++t) {
        const Eigen::MatrixXd g = eig_obs[t] * prior.eigenvectors().transpose();
        const PosteriorSummary s = posterior_covariance(g, noise, prior);
        const double value = utility(s, config.objective);
        if (value > worst_value) {
          worst_value = value;
          worst = t;
          const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.cov_post);
          u = eig.eigenvectors().col(prior.dim() - 1);
        }
      }
    }
    step.worst_theta = train[worst];
    step.worst_u = u;
    step.n_full_solves = result.full_solves;
    if (config.timing)
      step.t_wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    result.trace.push_back(std::move(step));

    if (config.beta_threshold && result.trace.back().beta_min >= *config.beta_threshold) {
      result.threshold_reached = true;
      break;
    }
  }
  return result;
}

}  // namespace obsel
