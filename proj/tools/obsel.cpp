#include "obsel/errors.hpp"
#include "obsel/experiment.hpp"
#include "obsel/verification.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

int exit_code(obsel::ErrorKind kind) {
  switch (kind) {
    case obsel::ErrorKind::config: return 2;
    case obsel::ErrorKind::numerical: return 3;
    case obsel::ErrorKind::invariant: return 4;
  }
  return 3;
}

struct Common {
  std::string config;
  std::string out;
  int threads = 0;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory, defaults to output_dir of the config");
  cmd->add_option("--threads", c.threads, "worker threads, 0 for all")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", c.seed, "overrides the seed of the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Observability-driven sensor selection"};
  app.require_subcommand(1);

  Common common;
  bool timing = false;
  std::string fault = "none";
  auto* build = app.add_subcommand("build", "build the test problem, write model.json and library.csv");
  auto* train = app.add_subcommand("train-rom", "greedy reduced basis training");
  auto* select = app.add_subcommand("select", "greedy sensor selection");
  auto* enumerate = app.add_subcommand("enumerate", "rank all admissible designs");
  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  for (auto* cmd : {build, train, select, enumerate, verify}) add_common(cmd, common);
  select->add_flag("--timing", timing, "record wall times in the trace");
  verify->add_option("--inject-fault", fault, "none, asymmetric_covariance or empty_selection");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    obsel::ExperimentConfig config = obsel::load_config(common.config);
    if (common.seed) config.seed = *common.seed;
    obsel::set_thread_count(common.threads);
    obsel::RunOptions options;
    options.out = common.out.empty() ? config.output_dir : std::filesystem::path(common.out);
    options.timing = timing;
    options.log = &std::cerr;
    const obsel::Fault injected = obsel::parse_fault(fault);
    const obsel::Experiment exp(std::move(config));

    if (build->parsed()) {
      obsel::cmd_build(exp, options);
      std::cout << exp.library().size() << " sensors at " << exp.library().site_count() << " sites, "
                << exp.model().dim_state() << " unknowns\n";
    } else if (train->parsed()) {
      const auto result = obsel::cmd_train_rom(exp, options);
      std::cout << "reduced basis of size " << result.rb.size() << ", max relative bound "
                << result.rb.achieved << (result.converged ? "" : " (tolerance not reached)") << '\n';
    } else if (select->parsed()) {
      const auto result = obsel::cmd_select(exp, options);
      std::cout << "selected";
      for (int id : result.noise.ids()) std::cout << ' ' << id;
      std::cout << "\nfull-order solves " << result.full_solves << ", min beta "
                << (result.trace.empty() ? 0.0 : result.trace.back().beta_min) << '\n';
    } else if (enumerate->parsed()) {
      const auto table = obsel::cmd_enumerate(exp, options);
      std::cout << table.rows.size() << " designs evaluated, " << table.singular_skipped << " singular\n";
    } else if (verify->parsed()) {
      std::optional<obsel::ReducedBasis> rb;
      if (exp.config().rom.enabled) rb = obsel::obtain_reduced_basis(exp, options);
      obsel::VerifyOptions vo;
      vo.fault = injected;
      vo.seed = exp.config().seed;
      vo.rb = rb ? &*rb : nullptr;
      const auto results = obsel::run_invariant_suite(exp, vo);
      obsel::print_report(std::cout, results);
      for (const auto& r : results)
        if (!r.passed) return 4;
    }
  } catch (const obsel::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
