#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "obsel/errors.hpp"
#include "obsel/noise_model.hpp"
#include "obsel/posterior.hpp"
#include "support.hpp"

using namespace obsel;

namespace {

Sensor at(int id, double x2, double x3, int site) {
  Sensor s;
  s.id = id;
  s.location = Eigen::Vector3d(0.1, x2, x3);
  s.site_id = site;
  s.stencil = {{id, 1.0}};
  return s;
}

// y(h) of the printed formula, term by term
double printed_variogram(double a, double b, double c, double h) {
  const double t = h / c > 1.0 ? h / c : 1.0;
  const double cubic = 1.5 * t - 0.5 * t * t * t;
  return a + (b - a) * cubic;
}

}  // namespace

TEST_CASE("kernel at zero distance") {
  const Sensor s = at(0, 0.3, 0.4, 0);
  for (auto mode : {ClampMode::paper_verbatim, ClampMode::spherical_covariance}) {
    VariogramKernel k;
    k.clamp_mode = mode;
    CHECK(kernel_eval(k, s, s) == doctest::Approx(2.2054073480730403).epsilon(1e-15));
  }
  // min clamp keeps y(0) = a, so the variance drops to the nugget
  VariogramKernel k;
  k.clamp_mode = ClampMode::spherical_min;
  CHECK(kernel_eval(k, s, s) == doctest::Approx(1.6850672040263555).epsilon(1e-15));
}

TEST_CASE("printed kernel at twice the range matches a scalar evaluation") {
  VariogramKernel k;
  k.clamp_mode = ClampMode::paper_verbatim;
  const double c = k.range;
  const Sensor s1 = at(0, 0.0, 0.0, 0);
  const Sensor s2 = at(1, 2 * c, 0.0, 1);
  const double y = printed_variogram(k.sill, k.nugget, c, 2 * c);
  const double expected = k.sill + k.nugget - y;
  CHECK(kernel_eval(k, s1, s2) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(2 * k.nugget - k.sill).epsilon(1e-14));
}

TEST_CASE("spherical covariance decays from the sill to the nugget") {
  VariogramKernel k;
  k.distance_scale = 2.0;
  const Sensor s1 = at(0, 0.0, 0.0, 0);
  CHECK(kernel_eval(k, s1, at(1, k.range / 2.0, 0.0, 1)) == doctest::Approx(k.nugget));
  CHECK(kernel_eval(k, s1, at(1, k.range, 0.0, 1)) == doctest::Approx(k.nugget));
  const double mid = kernel_eval(k, s1, at(1, k.range / 4.0, 0.0, 1));
  CHECK(mid < k.sill);
  CHECK(mid > k.nugget);
}

TEST_CASE("kernel is symmetric and ignores depth") {
  VariogramKernel k;
  k.distance_scale = 70.0;
  Sensor s1 = at(0, 0.1, 0.2, 0);
  Sensor s2 = at(1, 0.25, 0.05, 1);
  CHECK(kernel_eval(k, s1, s2) == kernel_eval(k, s2, s1));
  s2.location.x() = 0.2;
  const double before = kernel_eval(k, s1, s2);
  s2.location.x() = 0.02;
  CHECK(kernel_eval(k, s1, s2) == before);
}

TEST_CASE("invalid kernel parameters are rejected") {
  VariogramKernel k;
  k.range = 0.0;
  CHECK_THROWS_AS(k.validate(), ConfigInvalid);
  CHECK_THROWS_AS(parse_clamp_mode("cubic"), ConfigInvalid);
  CHECK(parse_clamp_mode("spherical_min") == ClampMode::spherical_min);
}

TEST_CASE("expansion of an empty state takes the square root") {
  NoiseState s;
  s.expand(at(0, 0, 0, 0), Eigen::VectorXd(0), 4.0);
  REQUIRE(s.size() == 1);
  CHECK(s.cov()(0, 0) == 4.0);
  CHECK(s.chol()(0, 0) == 2.0);
}

TEST_CASE("two-sensor expansion matches the closed form") {
  NoiseState s;
  s.expand(at(0, 0, 0, 0), Eigen::VectorXd(0), 1.0);
  s.expand(at(1, 1, 0, 1), Eigen::VectorXd::Constant(1, 0.5), 1.0);
  CHECK(s.chol()(0, 0) == doctest::Approx(1.0));
  CHECK(s.chol()(0, 1) == 0.0);
  CHECK(s.chol()(1, 0) == doctest::Approx(0.5));
  CHECK(s.chol()(1, 1) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
}

TEST_CASE("expansion on the test library matches a dense factorization") {
  auto [model, library] = build_test_problem(testing::small_config());
  VariogramKernel k;
  k.distance_scale = 70.0;
  const NoiseCovariance cov(library, k);
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ids = random_designs(library, 6, Restriction::one_per_site, 1, rng()).front();
    NoiseState s;
    for (int id : ids) s = cholesky_expand(s, k, library.at(id));
    const Eigen::MatrixXd full = cov.matrix(ids);
    const Eigen::MatrixXd ref = Eigen::LLT<Eigen::MatrixXd>(full).matrixL();
    CHECK((s.chol() - ref).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((s.chol() * s.chol().transpose() - full).norm() <= 1e-10 * full.norm());
    CHECK((s.cov() - full).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("any subset at distinct sites stays positive definite") {
  auto [model, library] = build_test_problem(testing::small_config());
  VariogramKernel k;
  k.distance_scale = 70.0;
  const NoiseCovariance cov(library, k);
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const auto ids = random_designs(library, library.site_count(), Restriction::one_per_site, 1, rng()).front();
    NoiseState s;
    for (int id : ids) CHECK_NOTHROW(s = cholesky_expand(s, cov, id));
  }
}

TEST_CASE("two sensors at one site are singular") {
  auto [model, library] = build_test_problem(testing::small_config());
  const NoiseCovariance cov(library, VariogramKernel{});
  NoiseState s = cholesky_expand(NoiseState(), cov, 0);
  REQUIRE(library.at(1).site_id == library.at(0).site_id);
  CHECK_THROWS_AS(cholesky_expand(s, cov, 1), NearSingular);
  CHECK_THROWS_AS(cholesky_expand(s, cov, 0), ConfigInvalid);
}

TEST_CASE("observation norm") {
  NoiseState s;
  s.expand(at(0, 0, 0, 0), Eigen::VectorXd(0), 1.0);
  s.expand(at(1, 1, 0, 1), Eigen::VectorXd::Zero(1), 1.0);
  CHECK(observation_norm_sq(s, Eigen::Vector2d(3, 4)) == doctest::Approx(25.0));
  CHECK(observation_norm_sq(s, Eigen::Vector2d(0, 0)) == 0.0);
  CHECK_THROWS_AS(observation_norm_sq(s, Eigen::Vector3d(1, 2, 3)), DimensionMismatch);

  std::mt19937_64 rng(7);
  const Eigen::MatrixXd c = testing::random_spd(3, rng);
  NoiseState t;
  for (int i = 0; i < 3; ++i) t.expand(at(i, i, 0, i), c.col(i).head(i), c(i, i));
  const Eigen::Vector3d d(0.3, -1.2, 2.0);
  const double ref = d.dot(c.inverse() * d);
  CHECK(std::abs(observation_norm_sq(t, d) - ref) <= 1e-10 * ref);
}

TEST_CASE("gain examples") {
  SensorLibrary lib({at(0, 0, 0, 0), at(1, 1, 0, 1), at(2, 2, 0, 2)});
  VariogramKernel k;
  k.sill = 1.0;
  k.nugget = 0.5;
  k.range = 1.0;
  // single sensor: reading squared over unit self covariance
  CHECK(observability_gain(NoiseState(), k, lib.at(0), 3.0, Eigen::VectorXd(0)) == doctest::Approx(9.0));

  // distance 2 is beyond the range, so the cross covariance is the nugget 0.5
  NoiseState unit;
  unit.expand(lib.at(0), Eigen::VectorXd(0), kernel_eval(k, lib.at(0), lib.at(0)));
  const double gain = observability_gain(unit, k, lib.at(2), 1.0, unit.whiten(Eigen::VectorXd::Constant(1, 1.0)));
  CHECK(gain == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  Eigen::Matrix2d full;
  full << 1.0, 0.5, 0.5, 1.0;
  const Eigen::Vector2d d(1.0, 1.0);
  CHECK(gain == doctest::Approx(d.dot(full.inverse() * d) - 1.0).epsilon(1e-14));
}

TEST_CASE("uncorrelated candidate gain is the squared reading") {
  SensorLibrary lib({at(0, 0, 0, 0), at(1, 5, 0, 1)});
  VariogramKernel k;
  k.sill = 1.0;
  k.nugget = 1e-300;
  k.range = 1.0;
  k.clamp_mode = ClampMode::spherical_covariance;
  NoiseState s;
  s.expand(lib.at(0), Eigen::VectorXd(0), 1.0);
  const double g = observability_gain(s, k, lib.at(1), 3.0, s.whiten(Eigen::VectorXd::Constant(1, 2.0)));
  CHECK(g == doctest::Approx(9.0));
}

TEST_CASE("norm grows by exactly the gain") {
  auto [model, library] = build_test_problem(testing::small_config());
  VariogramKernel k;
  k.distance_scale = 70.0;
  const NoiseCovariance cov(library, k);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 200; ++rep) {
    const int kk = 2 + static_cast<int>(rng() % 8);
    const auto ids = random_designs(library, kk, Restriction::one_per_site, 1, rng()).front();
    NoiseState s;
    for (int i = 0; i + 1 < kk; ++i) s = cholesky_expand(s, cov, ids[static_cast<std::size_t>(i)]);
    Eigen::VectorXd d(kk);
    for (int i = 0; i < kk; ++i) d(i) = normal(rng);
    const double before = observation_norm_sq(s, d.head(kk - 1));
    const double gain = observability_gain(s, cov, ids.back(), d(kk - 1), s.whiten(d.head(kk - 1)));
    const NoiseState t = cholesky_expand(s, cov, ids.back());
    const double after = observation_norm_sq(t, d);
    CHECK(gain >= 0.0);
    CHECK(std::abs(after - (before + gain)) <= 1e-9 * after);
    // dense-inverse oracle
    const Eigen::MatrixXd full = cov.matrix(ids);
    const double ref = d.dot(full.inverse() * d) -
                       d.head(kk - 1).dot(full.topLeftCorner(kk - 1, kk - 1).inverse() * d.head(kk - 1));
    CHECK(std::abs(gain - ref) <= 1e-9 * after);
  }
}

TEST_CASE("tabulated covariance equals kernel evaluation") {
  auto [model, library] = build_test_problem(testing::small_config());
  VariogramKernel k;
  k.distance_scale = 70.0;
  const NoiseCovariance cov(library, k);
  for (const auto& a : library)
    for (const auto& b : library) CHECK(cov(a.id, b.id) == kernel_eval(k, a, b));
  CHECK_THROWS_AS(library.at(static_cast<int>(library.size())), UnknownSensor);
}

TEST_CASE("one-shot factorization equals repeated expansion") {
  auto [model, library] = build_test_problem(testing::small_config());
  VariogramKernel k;
  k.distance_scale = 70.0;
  const NoiseCovariance cov(library, k);
  const auto ids = random_designs(library, 7, Restriction::one_per_site, 1, 13).front();
  NoiseState grown(0.2);
  std::vector<Sensor> sensors;
  for (int id : ids) {
    grown = cholesky_expand(grown, cov, id);
    sensors.push_back(library.at(id));
  }
  const NoiseState direct(sensors, cov.matrix(ids), 0.2);
  CHECK(direct.ids() == grown.ids());
  CHECK(direct.cov() == grown.cov());
  CHECK((direct.chol() - grown.chol()).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(direct.sigma2() == 0.2);

  const std::vector<Sensor> same_site{library.at(0), library.at(1)};
  CHECK_THROWS_AS(NoiseState(same_site, cov.matrix(std::vector<int>{0, 1})), NearSingular);
  CHECK_THROWS_AS(NoiseState(same_site, Eigen::MatrixXd::Identity(3, 3)), DimensionMismatch);
}
