#pragma once

#include "obsel/experiment.hpp"
#include "obsel/rom.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace obsel {

/// Outcome of one invariant. `margin` is the worst relative slack over all
/// instances. Inequalities that are tight in exact arithmetic accept margins
/// down to -1e-9, everything else needs a non-negative margin.
struct CheckResult {
  std::string name;
  bool passed = false;
  double margin = 0.0;
  int instances = 0;
  std::string detail;
};

enum class Fault {
  none,
  asymmetric_covariance,  // perturbs cov(i, j) for i < j
  empty_selection,        // asks for observability without sensors
};
Fault parse_fault(std::string_view name);

struct VerifyOptions {
  Fault fault = Fault::none;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
  std::uint64_t seed = 1;
  const ReducedBasis* rb = nullptr;  // enables the surrogate checks
};

/// Margins of the surrogate inequalities at one (theta, L), all non-negative
/// when the bounds hold. eps is the measured sup over u of the relative RB
/// error, computed from full-order states.
struct SandwichMargins {
  double eps = 0.0;
  double gamma = 0.0;
  double eta_max = 0.0;
  double alpha = 0.0, alpha_rb = 0.0;
  double beta = 0.0, beta_rb = 0.0;
  std::vector<std::pair<std::string, double>> margins;
};
SandwichMargins surrogate_sandwich(const AffineModel& model, const ReducedBasis& rb,
                                   const NoiseState& noise, const GaussianPrior& prior,
                                   const Eigen::Ref<const Eigen::VectorXd>& theta);

/// Sup over u of ||x - x~||_X / ||x||_X from full-order solves.
double measured_relative_error(const AffineModel& model, const ReducedBasis& rb,
                               const Eigen::Ref<const Eigen::VectorXd>& theta);

/// Symmetry of a covariance function over all pairs of the library.
CheckResult check_kernel_symmetry(const SensorLibrary& library,
                                  const std::function<double(int, int)>& cov);

std::vector<CheckResult> run_invariant_suite(const Experiment& exp, const VerifyOptions& options);

void print_report(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace obsel
