#pragma once

#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/observability.hpp"
#include "obsel/parallel.hpp"
#include "obsel/posterior.hpp"
#include "obsel/prior.hpp"
#include "obsel/rom.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

namespace obsel {

struct TrainSetSpec {
  enum class Kind { grid, random };
  Kind kind = Kind::grid;
  int n_per_axis = 1;      // grid
  std::size_t count = 1;   // random
  std::uint64_t seed = 0;  // random
};

/// Grid points run with the last axis fastest; a single point per axis sits at
/// the box center.
std::vector<Eigen::VectorXd> generate_train_set(const ParameterBox& box, const TrainSetSpec& spec);

enum class GreedyObjective { beta, trace, logdet, lambda_max };
GreedyObjective parse_greedy_objective(std::string_view name);
std::string_view to_string(GreedyObjective objective);

struct SelectionConfig {
  int k_max = 1;
  std::vector<Eigen::VectorXd> train_set;
  Restriction restriction = Restriction::none;
  GreedyObjective objective = GreedyObjective::beta;
  ObservabilityVariant variant = ObservabilityVariant::beta_G;
  std::optional<double> beta_threshold;  // stop once min beta~ reaches it
  double sigma2 = 1.0;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
  bool timing = false;  // record wall times, otherwise they are written as 0
  std::ostream* log = nullptr;
};

struct SelectionStep {
  int iteration = 0;
  int sensor_id = -1;
  double gain = 0.0;
  double runner_up_gain = 0.0;  // best gain among the other candidates, 0 if none
  Eigen::VectorXd worst_theta;  // configuration targeted by the next iteration
  Eigen::VectorXd worst_u;
  double beta_min = 0.0;
  double beta_mean = 0.0;
  double t_wall_ms = 0.0;
  int n_full_solves = 0;  // cumulative, loop solves only
  int candidates = 0;     // gains evaluated = triangular solves in the sweep
  std::vector<int> skipped;  // candidates with a singular expanded covariance
};

struct SelectionResult {
  NoiseState noise;
  std::vector<SelectionStep> trace;
  int full_solves = 0;       // one per iteration
  int prep_full_solves = 0;  // full-order prior states when no surrogate is used
  bool threshold_reached = false;
  std::vector<ObservabilityResult> final_observability;  // per training point
};

/// Greedy selection with the surrogate `rb` (or full-order states when null).
SelectionResult sensor_selection(const AffineModel& model, const ReducedBasis* rb,
                                 const SensorLibrary& library, const NoiseCovariance& cov,
                                 const GaussianPrior& prior, const SelectionConfig& config);

}  // namespace obsel
