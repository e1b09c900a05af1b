#pragma once

#include "obsel/forward_model.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/observability.hpp"
#include "obsel/posterior.hpp"
#include "obsel/selection.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace obsel {

/// Training set as written in a config: a grid, random points, or the
/// reference configuration alone.
struct TrainSetConfig {
  enum class Kind { grid, random, reference };
  Kind kind = Kind::grid;
  int n_per_axis = 1;
  std::size_t count = 1;
  std::optional<std::uint64_t> seed;  // random; falls back to the experiment seed
};

struct PriorConfig {
  Eigen::VectorXd mean;  // empty -> zero
  Eigen::MatrixXd cov;
};

struct NoiseConfig {
  VariogramKernel kernel;
  double sigma2 = 1.0;
};

struct RomConfig {
  bool enabled = true;
  double tolerance = 1e-4;
  int max_size = 200;
  TrainSetConfig train;
};

struct SelectionSection {
  int k_max = 1;
  TrainSetConfig train;
  Restriction restriction = Restriction::none;
  GreedyObjective objective = GreedyObjective::beta;
  ObservabilityVariant variant = ObservabilityVariant::beta_G;
  std::optional<double> beta_threshold;
  bool use_rom = true;
};

struct EnumerationSection {
  int k = 1;
  double cap = 2e6;
  Restriction restriction = Restriction::none;
  Eigen::VectorXd theta;  // empty -> theta_ref
  std::vector<std::vector<int>> designs;  // ranked in the summary
};

struct VerifySection {
  int samples = 20;          // random (theta, L) pairs for the sandwich checks
  int rb_solves = 100;       // random solves for the certification check
  int chains = 50;           // random expansion chains
  int max_sensors = 12;      // length of the random chains
};

struct ExperimentConfig {
  TestProblemConfig test_problem;
  PriorConfig prior;
  NoiseConfig noise;
  RomConfig rom;
  SelectionSection selection;
  EnumerationSection enumeration;
  VerifySection verify;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
};

/// Strict YAML parsing: unknown keys and ill-typed values raise ConfigInvalid
/// with the offending line and column.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);

std::vector<Eigen::VectorXd> resolve_train_set(const TrainSetConfig& spec, const AffineModel& model,
                                               std::uint64_t fallback_seed);

}  // namespace obsel
