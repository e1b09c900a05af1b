#include "obsel/config.hpp"

#include "obsel/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace obsel {

namespace {

std::string where(const std::string& origin, const YAML::Mark& mark) {
  if (mark.is_null() || mark.line < 0) return origin;
  return origin + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
}

/// A mapping whose keys must all be consumed before finish().
class Section {
 public:
  Section(YAML::Node node, std::string name, const std::string& origin)
      : node_(std::move(node)), name_(std::move(name)), origin_(&origin) {
    if (!node_.IsMap()) fail(node_, "section '" + name_ + "' must be a mapping");
  }

  bool has(const std::string& key) {
    known_.insert(key);
    return static_cast<bool>(node_[key]);
  }

  YAML::Node raw(const std::string& key) {
    known_.insert(key);
    return node_[key];
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    known_.insert(key);
    const YAML::Node n = node_[key];
    if (!n) return fallback;
    return as<T>(n, key);
  }

  template <typename T>
  T require(const std::string& key) {
    known_.insert(key);
    const YAML::Node n = node_[key];
    if (!n) fail(node_, "missing key '" + key + "' in " + name_);
    return as<T>(n, key);
  }

  template <typename T>
  T as(const YAML::Node& n, const std::string& key) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "bad value for '" + key + "' in " + name_);
    }
  }

  Section sub(const std::string& key) {
    known_.insert(key);
    return Section(node_[key], name_ + "." + key, *origin_);
  }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& what) const {
    YAML::Mark mark = YAML::Mark::null_mark();
    if (n.IsDefined()) mark = n.Mark();
    else if (node_.IsDefined()) mark = node_.Mark();
    throw ConfigInvalid(where(*origin_, mark) + ": " + what);
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      const auto key = it->first.as<std::string>();
      if (!known_.count(key)) fail(it->first, "unknown key '" + key + "' in " + name_);
    }
  }

  const std::string& origin() const { return *origin_; }

 private:
  YAML::Node node_;
  std::string name_;
  const std::string* origin_;
  std::set<std::string> known_;
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <std::size_t N, typename T>
std::array<T, N> fixed(Section& s, const std::string& key, std::array<T, N> fallback) {
  if (!s.has(key)) return fallback;
  const YAML::Node n = s.raw(key);
  const auto v = s.as<std::vector<T>>(n, key);
  if (v.size() != N) s.fail(n, "'" + key + "' needs " + std::to_string(N) + " entries");
  std::array<T, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

TrainSetConfig parse_train(Section s) {
  TrainSetConfig out;
  const auto kind = s.require<std::string>("kind");
  if (kind == "grid") {
    out.kind = TrainSetConfig::Kind::grid;
    out.n_per_axis = s.require<int>("n_per_axis");
    if (out.n_per_axis < 1) s.fail(s.raw("n_per_axis"), "n_per_axis must be at least 1");
  } else if (kind == "random") {
    out.kind = TrainSetConfig::Kind::random;
    const int count = s.require<int>("count");
    if (count < 1) s.fail(s.raw("count"), "count must be at least 1");
    out.count = static_cast<std::size_t>(count);
    if (s.has("seed")) out.seed = s.require<std::uint64_t>("seed");
  } else if (kind == "reference") {
    out.kind = TrainSetConfig::Kind::reference;
  } else {
    s.fail(s.raw("kind"), "unknown training set kind '" + kind + "'");
  }
  s.finish();
  return out;
}

void parse_test_problem(Section s, TestProblemConfig& tp) {
  tp.grid = fixed<3>(s, "grid", tp.grid);
  tp.extent = fixed<3>(s, "extent", tp.extent);
  tp.layer_tops = s.get("layer_tops", tp.layer_tops);
  if (s.has("box")) {
    Section box = s.sub("box");
    tp.box.lower = to_vector(box.require<std::vector<double>>("lower"));
    tp.box.upper = to_vector(box.require<std::vector<double>>("upper"));
    box.finish();
  }
  if (s.has("theta_ref")) tp.theta_ref = to_vector(s.require<std::vector<double>>("theta_ref"));
  tp.flux_modes = s.get("flux_modes", tp.flux_modes);
  tp.sites = fixed<2>(s, "sites", tp.sites);
  tp.depths = s.get("depths", tp.depths);
  if (s.has("site_depths")) {
    const auto mode = s.require<std::string>("site_depths");
    if (mode == "all")
      tp.site_depths = SiteDepths::all;
    else if (mode == "one_random")
      tp.site_depths = SiteDepths::one_random;
    else
      s.fail(s.raw("site_depths"), "site_depths must be 'all' or 'one_random'");
  }
  tp.depth_seed = s.get("depth_seed", tp.depth_seed);
  tp.interpolate = s.get("interpolate", tp.interpolate);
  s.finish();
}

void parse_prior(Section s, PriorConfig& prior) {
  if (s.has("mean")) prior.mean = to_vector(s.require<std::vector<double>>("mean"));
  const bool diag = s.has("cov_diag");
  const bool full = s.has("cov");
  if (diag == full) s.fail(s.raw(diag ? "cov" : "cov_diag"), "prior needs exactly one of cov_diag, cov");
  if (diag) {
    prior.cov = to_vector(s.require<std::vector<double>>("cov_diag")).asDiagonal();
  } else {
    const auto rows = s.require<std::vector<std::vector<double>>>("cov");
    const auto m = static_cast<Eigen::Index>(rows.size());
    prior.cov.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m)
        s.fail(s.raw("cov"), "prior cov must be square");
      for (Eigen::Index j = 0; j < m; ++j) prior.cov(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  s.finish();
}

void parse_kernel(Section s, NoiseConfig& noise) {
  auto& k = noise.kernel;
  k.sill = s.get("sill", k.sill);
  k.nugget = s.get("nugget", k.nugget);
  k.range = s.get("range", k.range);
  k.distance_scale = s.get("distance_scale", k.distance_scale);
  if (s.has("clamp_mode")) {
    try {
      k.clamp_mode = parse_clamp_mode(s.require<std::string>("clamp_mode"));
    } catch (const ConfigInvalid& e) {
      s.fail(s.raw("clamp_mode"), e.what());
    }
  }
  noise.sigma2 = s.get("sigma2", noise.sigma2);
  if (!(noise.sigma2 > 0.0)) s.fail(s.raw("sigma2"), "sigma2 must be positive");
  try {
    k.validate();
  } catch (const ConfigInvalid& e) {
    throw ConfigInvalid(s.origin() + ": " + e.what());
  }
  s.finish();
}

void parse_rom(Section s, RomConfig& rom) {
  rom.enabled = s.get("enabled", rom.enabled);
  rom.tolerance = s.get("tolerance", rom.tolerance);
  rom.max_size = s.get("max_size", rom.max_size);
  if (!(rom.tolerance > 0.0)) s.fail(s.raw("tolerance"), "tolerance must be positive");
  if (rom.max_size < 1) s.fail(s.raw("max_size"), "max_size must be at least 1");
  if (s.has("train")) rom.train = parse_train(s.sub("train"));
  s.finish();
}

template <typename Parse>
auto parse_enum(Section& s, const std::string& key, Parse parse, decltype(parse("")) fallback) {
  if (!s.has(key)) return fallback;
  try {
    return parse(s.require<std::string>(key));
  } catch (const ConfigInvalid& e) {
    s.fail(s.raw(key), e.what());
  }
}

void parse_selection(Section s, SelectionSection& sel) {
  sel.k_max = s.get("k_max", sel.k_max);
  if (sel.k_max < 1) s.fail(s.raw("k_max"), "k_max must be at least 1");
  if (s.has("train")) sel.train = parse_train(s.sub("train"));
  sel.restriction = parse_enum(s, "restriction", parse_restriction, sel.restriction);
  sel.objective = parse_enum(s, "greedy_objective", parse_greedy_objective, sel.objective);
  if (s.has("variant")) {
    const auto v = s.require<std::string>("variant");
    if (v == "beta_G")
      sel.variant = ObservabilityVariant::beta_G;
    else if (v == "alpha_W")
      sel.variant = ObservabilityVariant::alpha_W;
    else
      s.fail(s.raw("variant"), "variant must be 'beta_G' or 'alpha_W'");
  }
  if (s.has("beta_threshold")) sel.beta_threshold = s.require<double>("beta_threshold");
  sel.use_rom = s.get("use_rom", sel.use_rom);
  s.finish();
}

void parse_enumeration(Section s, EnumerationSection& en) {
  en.k = s.get("k", en.k);
  if (en.k < 1) s.fail(s.raw("k"), "k must be at least 1");
  en.cap = s.get("cap", en.cap);
  en.restriction = parse_enum(s, "restriction", parse_restriction, en.restriction);
  if (s.has("theta")) en.theta = to_vector(s.require<std::vector<double>>("theta"));
  en.designs = s.get("designs", en.designs);
  for (const auto& d : en.designs)
    if (static_cast<int>(d.size()) != en.k) s.fail(s.raw("designs"), "every listed design needs k sensors");
  s.finish();
}

void parse_verify(Section s, VerifySection& v) {
  v.samples = s.get("samples", v.samples);
  v.rb_solves = s.get("rb_solves", v.rb_solves);
  v.chains = s.get("chains", v.chains);
  v.max_sensors = s.get("max_sensors", v.max_sensors);
  if (v.samples < 1 || v.rb_solves < 1 || v.chains < 1 || v.max_sensors < 1)
    s.fail(s.raw("samples"), "verify counts must be positive");
  s.finish();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigInvalid(where(origin, e.mark) + ": " + e.msg);
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  ExperimentConfig cfg;
  Section s(root, "config", origin);
  if (s.has("test_problem")) parse_test_problem(s.sub("test_problem"), cfg.test_problem);
  if (!s.has("prior")) s.fail(root, "missing section 'prior'");
  parse_prior(s.sub("prior"), cfg.prior);
  if (s.has("kernel")) parse_kernel(s.sub("kernel"), cfg.noise);
  if (s.has("rom")) parse_rom(s.sub("rom"), cfg.rom);
  if (s.has("selection")) parse_selection(s.sub("selection"), cfg.selection);
  if (s.has("enumeration")) parse_enumeration(s.sub("enumeration"), cfg.enumeration);
  if (s.has("verify")) parse_verify(s.sub("verify"), cfg.verify);
  cfg.output_dir = s.get<std::string>("output_dir", cfg.output_dir.string());
  cfg.seed = s.get("seed", cfg.seed);
  s.finish();

  if (cfg.prior.cov.rows() != cfg.test_problem.flux_modes)
    throw ConfigInvalid(origin + ": prior dimension " + std::to_string(cfg.prior.cov.rows()) +
                        " differs from flux_modes " + std::to_string(cfg.test_problem.flux_modes));
  if (cfg.prior.mean.size() == 0) cfg.prior.mean = Eigen::VectorXd::Zero(cfg.prior.cov.rows());
  if (cfg.prior.mean.size() != cfg.prior.cov.rows())
    throw ConfigInvalid(origin + ": prior mean and cov differ in size");
  const auto p = static_cast<Eigen::Index>(cfg.test_problem.layer_tops.size());
  if (cfg.enumeration.theta.size() != 0 && cfg.enumeration.theta.size() != p)
    throw ConfigInvalid(origin + ": enumeration theta has the wrong length");
  if (cfg.selection.use_rom && !cfg.rom.enabled)
    throw ConfigInvalid(origin + ": selection.use_rom requires rom.enabled");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigInvalid("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::vector<Eigen::VectorXd> resolve_train_set(const TrainSetConfig& spec, const AffineModel& model,
                                               std::uint64_t fallback_seed) {
  if (spec.kind == TrainSetConfig::Kind::reference) return {model.theta_ref};
  TrainSetSpec s;
  s.kind = spec.kind == TrainSetConfig::Kind::grid ? TrainSetSpec::Kind::grid : TrainSetSpec::Kind::random;
  s.n_per_axis = spec.n_per_axis;
  s.count = spec.count;
  s.seed = spec.seed.value_or(fallback_seed);
  return generate_train_set(model.box, s);
}

}  // namespace obsel
