#include "obsel/experiment.hpp"

#include "obsel/errors.hpp"
#include "obsel/io.hpp"
#include "obsel/observability.hpp"

#include <algorithm>

namespace obsel {

namespace {

struct Built {
  AffineModel model;
  SensorLibrary library;
};

Built build(const ExperimentConfig& config) {
  auto [model, library] = build_test_problem(config.test_problem);
  return {std::move(model), std::move(library)};
}

}  // namespace

Experiment::Experiment(ExperimentConfig config)
    : config_(std::move(config)),
      model_(),
      library_(),
      prior_(config_.prior.mean, config_.prior.cov) {
  Built b = build(config_);
  model_ = std::move(b.model);
  library_ = std::move(b.library);
  if (prior_.dim() != model_.dim_param()) throw DimensionMismatch("prior dimension differs from flux_modes");
  cov_ = std::make_unique<NoiseCovariance>(library_, config_.noise.kernel);
}

std::vector<Eigen::VectorXd> Experiment::rom_train_set() const {
  return resolve_train_set(config_.rom.train, model_, config_.seed);
}

std::vector<Eigen::VectorXd> Experiment::selection_train_set() const {
  return resolve_train_set(config_.selection.train, model_, config_.seed + 1);
}

Eigen::VectorXd Experiment::enumeration_theta() const {
  const auto& theta = config_.enumeration.theta;
  if (theta.size() == 0) return model_.theta_ref;
  if (!model_.box.contains(theta)) throw ConfigInvalid("enumeration theta outside the hyper-parameter box");
  return theta;
}

GreedyOptions greedy_options(const Experiment& exp, ExecutionPolicy policy) {
  GreedyOptions g;
  g.tolerance = exp.config().rom.tolerance;
  g.max_size = exp.config().rom.max_size;
  g.policy = policy;
  return g;
}

ReducedBasis obtain_reduced_basis(const Experiment& exp, const RunOptions& options) {
  const auto path = options.out / "rom.bin";
  if (std::filesystem::exists(path)) {
    ReducedBasis rb = load_reduced_basis(path);
    const auto& m = exp.model();
    if (rb.dim_state() == m.dim_state() && rb.dim_param() == m.dim_param() &&
        rb.dim_theta() == m.dim_theta() && rb.tolerance == exp.config().rom.tolerance)
      return rb;
    if (options.log) *options.log << "rom.bin does not match the config, training in memory\n";
  }
  const auto train = exp.rom_train_set();
  return greedy_train(exp.model(), exp.prior(), train, greedy_options(exp, options.policy)).rb;
}

SelectionConfig selection_config(const Experiment& exp, const RunOptions& options) {
  const auto& s = exp.config().selection;
  SelectionConfig c;
  c.k_max = s.k_max;
  c.train_set = exp.selection_train_set();
  c.restriction = s.restriction;
  c.objective = s.objective;
  c.variant = s.variant;
  c.beta_threshold = s.beta_threshold;
  c.sigma2 = exp.sigma2();
  c.policy = options.policy;
  c.timing = options.timing;
  c.log = options.log;
  return c;
}

void cmd_build(const Experiment& exp, const RunOptions& options) {
  const auto& m = exp.model();
  const auto& tp = exp.config().test_problem;
  nlohmann::ordered_json doc;
  doc["dim_state"] = m.dim_state();
  doc["dim_param"] = m.dim_param();
  doc["dim_theta"] = m.dim_theta();
  doc["grid"] = {m.grid.nodes[0], m.grid.nodes[1], m.grid.nodes[2]};
  doc["extent"] = {m.grid.extent[0], m.grid.extent[1], m.grid.extent[2]};
  doc["layer_tops"] = tp.layer_tops;
  std::vector<long long> per_layer(static_cast<std::size_t>(m.dim_theta()), 0);
  for (int l : m.layer_of_node) ++per_layer[static_cast<std::size_t>(l)];
  doc["nodes_per_layer"] = per_layer;
  doc["box"] = {{"lower", to_json(m.box.lower)}, {"upper", to_json(m.box.upper)}};
  doc["theta_ref"] = to_json(m.theta_ref);
  doc["sensors"] = exp.library().size();
  doc["sites"] = exp.library().site_count();
  doc["prior_eigenvalues"] = to_json(exp.prior().eigenvalues());
  doc["sigma2"] = exp.sigma2();
  doc["clamp_mode"] = std::string(to_string(exp.cov().kernel().clamp_mode));
  write_json(options.out / "model.json", doc);
  write_library_csv(options.out / "library.csv", exp.library());
}

GreedyResult cmd_train_rom(const Experiment& exp, const RunOptions& options) {
  const auto train = exp.rom_train_set();
  GreedyResult result = greedy_train(exp.model(), exp.prior(), train, greedy_options(exp, options.policy));
  save_reduced_basis(result.rb, options.out / "rom.bin");

  CsvWriter csv(options.out / "rom_convergence.csv", {"iter", "max_bound", "true_err_at_argmax"});
  for (const auto& r : result.history) {
    csv.cell(r.iteration).cell(r.max_bound).cell(r.true_error_at_argmax);
    csv.end_row();
  }
  csv.flush();

  nlohmann::ordered_json doc;
  doc["size"] = result.rb.size();
  doc["converged"] = result.converged;
  doc["tolerance"] = result.rb.tolerance;
  doc["achieved"] = result.rb.achieved;
  doc["train_points"] = train.size();
  write_json(options.out / "rom.json", doc);
  return result;
}

SelectionResult cmd_select(const Experiment& exp, const RunOptions& options) {
  std::optional<ReducedBasis> rb;
  if (exp.config().selection.use_rom) rb = obtain_reduced_basis(exp, options);
  const SelectionConfig config = selection_config(exp, options);
  SelectionResult result =
      sensor_selection(exp.model(), rb ? &*rb : nullptr, exp.library(), exp.cov(), exp.prior(), config);

  const auto p = exp.model().dim_theta();
  std::vector<std::string> header{"iter", "sensor_id", "gain"};
  for (Eigen::Index q = 0; q < p; ++q) header.push_back("worst_theta_" + std::to_string(q + 1));
  for (const char* h : {"beta_min", "beta_mean", "t_wall_ms", "n_full_solves"}) header.emplace_back(h);
  CsvWriter csv(options.out / "selection_trace.csv", header);
  for (const auto& s : result.trace) {
    csv.cell(s.iteration).cell(s.sensor_id).cell(s.gain);
    for (Eigen::Index q = 0; q < p; ++q) csv.cell(s.worst_theta(q));
    csv.cell(s.beta_min).cell(s.beta_mean).cell(s.t_wall_ms).cell(s.n_full_solves);
    csv.end_row();
  }
  csv.flush();

  const std::vector<int> order = result.noise.ids();
  std::vector<int> design = order;
  std::sort(design.begin(), design.end());
  const Eigen::VectorXd theta = exp.model().theta_ref;
  const Eigen::MatrixXd g = assemble_G(exp.model(), exp.library(), order, theta);
  const PosteriorSummary post = posterior_covariance(g, result.noise, exp.prior());
  const auto beta_ref = observability_from_observations(g * exp.prior().eigenvectors(), result.noise,
                                                        exp.prior(), Eigen::MatrixXd(),
                                                        ObservabilityVariant::beta_G, true);

  nlohmann::ordered_json doc;
  doc["objective"] = std::string(to_string(config.objective));
  doc["restriction"] = std::string(to_string(config.restriction));
  doc["surrogate"] = rb.has_value();
  doc["train_points"] = config.train_set.size();
  doc["sensors"] = order;
  doc["design"] = design;
  doc["full_solves"] = result.full_solves;
  doc["prep_full_solves"] = result.prep_full_solves;
  doc["threshold_reached"] = result.threshold_reached;
  doc["beta_min"] = result.trace.empty() ? 0.0 : result.trace.back().beta_min;
  auto skipped = nlohmann::ordered_json::array();
  for (const auto& s : result.trace) skipped.push_back(s.skipped);
  doc["skipped"] = skipped;
  doc["reference"] = {{"theta", to_json(theta)},
                      {"beta", beta_ref.beta},
                      {"trace", post.trace},
                      {"logdet", post.logdet},
                      {"lambda_max", post.lambda_max},
                      {"eigenvalues", to_json(post.eigenvalues)}};
  write_json(options.out / "selection.json", doc);
  write_covariance_csv(options.out / "selection_noise_cov.csv", exp.cov(), order);
  return result;
}

DesignTable cmd_enumerate(const Experiment& exp, const RunOptions& options) {
  const auto& en = exp.config().enumeration;
  EnumerationOptions opt;
  opt.k = en.k;
  opt.restriction = en.restriction;
  opt.cap = en.cap;
  opt.sigma2 = exp.sigma2();
  opt.policy = options.policy;
  const Eigen::VectorXd theta = exp.enumeration_theta();
  DesignTable table = enumerate_designs(exp.model(), exp.library(), exp.cov(), exp.prior(), theta, opt);

  CsvWriter csv(options.out / "designs.csv", {"ids", "trace", "logdet", "lambda_max", "beta"});
  for (const auto& r : table.rows) {
    csv.cell(format_ids(r.ids)).cell(r.trace).cell(r.logdet).cell(r.lambda_max).cell(r.beta);
    csv.end_row();
  }
  csv.flush();

  const std::size_t n = table.rows.size();
  std::vector<double> beta(n), trace(n), logdet(n), lmax(n);
  for (std::size_t i = 0; i < n; ++i) {
    beta[i] = table.rows[i].beta;
    trace[i] = -table.rows[i].trace;
    logdet[i] = -table.rows[i].logdet;
    lmax[i] = -table.rows[i].lambda_max;
  }
  auto optimum = [&](std::size_t i, Criterion c) {
    return nlohmann::ordered_json{{"ids", table.rows[i].ids}, {"value", criterion_value(table.rows[i], c)}};
  };
  nlohmann::ordered_json doc;
  doc["k"] = en.k;
  doc["restriction"] = std::string(to_string(en.restriction));
  doc["theta"] = to_json(theta);
  doc["evaluated"] = n;
  doc["singular_skipped"] = table.singular_skipped;
  doc["optima"] = {{"trace", optimum(table.argmin_trace, Criterion::trace)},
                   {"logdet", optimum(table.argmin_logdet, Criterion::logdet)},
                   {"lambda_max", optimum(table.argmin_lambda_max, Criterion::lambda_max)},
                   {"beta", optimum(table.argmax_beta, Criterion::beta)}};
  doc["rank_correlation_with_beta"] = {{"trace", rank_correlation(beta, trace)},
                                       {"logdet", rank_correlation(beta, logdet)},
                                       {"lambda_max", rank_correlation(beta, lmax)}};
  auto ranked = nlohmann::ordered_json::array();
  for (auto ids : en.designs) {
    std::sort(ids.begin(), ids.end());
    nlohmann::ordered_json entry{{"ids", ids}};
    for (Criterion c : {Criterion::trace, Criterion::logdet, Criterion::lambda_max, Criterion::beta})
      entry["percentile"][std::string(to_string(c))] = percentile_rank(table, ids, c);
    ranked.push_back(entry);
  }
  doc["designs"] = ranked;
  write_json(options.out / "enumeration.json", doc);
  return table;
}

}  // namespace obsel
