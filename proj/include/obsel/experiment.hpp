#pragma once

#include "obsel/config.hpp"
#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/parallel.hpp"
#include "obsel/posterior.hpp"
#include "obsel/prior.hpp"
#include "obsel/rom.hpp"
#include "obsel/selection.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>

namespace obsel {

/// Everything a command needs, built once from a config. Not movable because
/// the covariance refers to the library.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const ExperimentConfig& config() const { return config_; }
  const AffineModel& model() const { return model_; }
  const SensorLibrary& library() const { return library_; }
  const GaussianPrior& prior() const { return prior_; }
  const NoiseCovariance& cov() const { return *cov_; }
  double sigma2() const { return config_.noise.sigma2; }

  std::vector<Eigen::VectorXd> rom_train_set() const;
  std::vector<Eigen::VectorXd> selection_train_set() const;
  Eigen::VectorXd enumeration_theta() const;

 private:
  ExperimentConfig config_;
  AffineModel model_;
  SensorLibrary library_;
  GaussianPrior prior_;
  std::unique_ptr<NoiseCovariance> cov_;
};

struct RunOptions {
  std::filesystem::path out;
  ExecutionPolicy policy = ExecutionPolicy::parallel;
  bool timing = false;
  std::ostream* log = nullptr;
};

GreedyOptions greedy_options(const Experiment& exp, ExecutionPolicy policy);

/// Reduced basis from `<out>/rom.bin` when it matches the experiment, trained
/// in memory otherwise.
ReducedBasis obtain_reduced_basis(const Experiment& exp, const RunOptions& options);

SelectionConfig selection_config(const Experiment& exp, const RunOptions& options);

/// model.json and library.csv
void cmd_build(const Experiment& exp, const RunOptions& options);
/// rom.bin, rom.json and rom_convergence.csv. StagnationError propagates.
GreedyResult cmd_train_rom(const Experiment& exp, const RunOptions& options);
/// selection_trace.csv, selection.json and the noise covariance of the design.
SelectionResult cmd_select(const Experiment& exp, const RunOptions& options);
/// designs.csv and enumeration.json
DesignTable cmd_enumerate(const Experiment& exp, const RunOptions& options);

}  // namespace obsel
