// Serial reference loops against their OpenMP versions on the default
// 500-sensor problem. The second argument of each benchmark selects the
// policy: 0 serial, 1 parallel.

#include "obsel/forward_model.hpp"
#include "obsel/kernels.hpp"
#include "obsel/observability.hpp"
#include "obsel/posterior.hpp"
#include "obsel/rom.hpp"
#include "obsel/selection.hpp"

#include <benchmark/benchmark.h>

#include <memory>
#include <numeric>
#include <vector>

using namespace obsel;

namespace {

struct Setup {
  std::pair<AffineModel, SensorLibrary> problem;
  AffineModel& model = problem.first;
  SensorLibrary& library = problem.second;
  GaussianPrior prior;
  NoiseCovariance cov;
  std::vector<Eigen::VectorXd> thetas;
  ReducedBasis rb;
  NoiseState chosen;
  std::vector<int> candidates;
  std::vector<double> readings;
  Eigen::VectorXd z_cache;
  std::vector<Eigen::MatrixXd> eig_obs, grams;
  DesignInputs inputs;
  std::vector<std::vector<int>> designs;

  Setup()
      : problem(build_test_problem(TestProblemConfig{})),
        prior(Eigen::VectorXd::Zero(5), Eigen::VectorXd((Eigen::VectorXd(5) << 400, 120, 100, 5, 4).finished()).asDiagonal()),
        cov(library, [] {
          VariogramKernel k;
          k.distance_scale = 70.0;
          return k;
        }()) {
    TrainSetSpec grid;
    grid.n_per_axis = 4;
    thetas = generate_train_set(model.box, grid);
    grid.n_per_axis = 3;
    const auto rb_train = generate_train_set(model.box, grid);
    rb = greedy_train(model, prior, rb_train, GreedyOptions{}).rb;

    const auto ids = random_designs(library, 10, Restriction::one_per_site, 1, 3).front();
    chosen = NoiseState(1e-2);
    for (int id : ids) chosen = cholesky_expand(chosen, cov, id);
    for (const auto& s : library)
      if (!chosen.contains(s.id)) candidates.push_back(s.id);

    std::vector<int> all(library.size());
    std::iota(all.begin(), all.end(), 0);
    const Eigen::MatrixXd g_ref = assemble_G(model, library, all, model.theta_ref);
    const Eigen::VectorXd x = solve(model, model.theta_ref, prior.eigenvectors().col(prior.dim() - 1));
    readings.resize(library.size());
    for (const auto& s : library) readings[static_cast<std::size_t>(s.id)] = s.apply(x);
    Eigen::VectorXd observed(chosen.size());
    for (Eigen::Index i = 0; i < chosen.size(); ++i) observed(i) = readings[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])];
    z_cache = chosen.whiten(observed);

    for (const auto& theta : thetas) {
      const PriorStates states = reduced_prior_states(rb, theta, prior);
      eig_obs.push_back(observe_prior_states(states, chosen, &rb));
      grams.push_back(states.gram);
    }

    inputs.unit_obs = g_ref;
    inputs.eig_obs = g_ref * prior.eigenvectors();
    inputs.cov = &cov;
    inputs.prior = &prior;
    inputs.sigma2 = 1e-2;
    designs = random_designs(library, 5, Restriction::one_per_site, 2000, 5);
  }
};

Setup& setup() {
  static const std::unique_ptr<Setup> s = std::make_unique<Setup>();
  return *s;
}

ExecutionPolicy policy(const benchmark::State& state) {
  return state.range(0) == 0 ? ExecutionPolicy::serial : ExecutionPolicy::parallel;
}

void BM_SweepGains(benchmark::State& state) {
  auto& s = setup();
  for (auto _ : state)
    benchmark::DoNotOptimize(sweep_gains(policy(state), s.chosen, s.cov, s.candidates, s.readings, s.z_cache));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.candidates.size()));
}

void BM_ObservabilitySweep(benchmark::State& state) {
  auto& s = setup();
  for (auto _ : state)
    benchmark::DoNotOptimize(observability_sweep(policy(state), s.eig_obs, s.grams, s.chosen, s.prior,
                                                 ObservabilityVariant::beta_G, true));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.thetas.size()));
}

void BM_RbBounds(benchmark::State& state) {
  auto& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(rb_bounds(policy(state), s.rb, s.thetas));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.thetas.size()));
}

void BM_EvaluateDesigns(benchmark::State& state) {
  auto& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_designs(policy(state), s.inputs, s.designs));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.designs.size()));
}

}  // namespace

BENCHMARK(BM_SweepGains)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ObservabilitySweep)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RbBounds)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateDesigns)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
