#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "icsurv/inference.hpp"
#include "icsurv/simgen.hpp"
#include "support.hpp"

using namespace icsurv;
namespace ts = testing_support;

namespace {

Subject make_subject(const std::string& id, double x, std::vector<double> times, std::vector<int> xi, double y,
                     int delta) {
  Subject s;
  s.id = id;
  s.covariates = CovariatePath::constant({x});
  s.monitor_times = std::move(times);
  s.diagnoses = std::move(xi);
  s.y = y;
  s.delta = delta;
  return s;
}

// sum_i log sum_k w_k L_i(b_k), with the joint factor summed over S by enumeration.
double oracle_loglik(const std::vector<Subject>& subjects, const ModelParams& m, const BaselineHazard& lambda,
                     const BaselineHazard& nu, std::size_t quad_points) {
  const NormalGrid grid = normal_grid(gauss_hermite(quad_points), m.sigma2);
  double total = 0.0;
  for (const auto& s : subjects) {
    double v = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      v += grid.weights[k] * ts::oracle::mixture(s, m, lambda, nu, grid.points[k]);
    total += std::log(v);
  }
  return total;
}

// Golden-section line search for the maximum of f on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, int iters = 200) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi, c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iters && b - a > 1e-13; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

std::vector<Subject> simulated_subjects(std::size_t n, std::size_t rep) {
  sim::SimSetting setting;
  setting.n = n;
  std::vector<Subject> out;
  for (auto& gs : sim::generate_replicate(setting, rep)) out.push_back(gs.subject);
  return out;
}

}  // namespace

TEST_CASE("profile value is the likelihood at the profiled baselines") {
  std::mt19937_64 g(31);
  ts::InstanceShape shape;
  shape.max_visits = 4;
  const auto subjects = ts::random_subjects(g, 25, shape);
  const Dataset data(subjects);
  ModelParams m = ts::random_params(g, 2);
  const Design design(data, m.p, m.q);
  const BaselineHazard lam0{data.disease_support(), std::vector<double>(data.disease_support().size(), 0.1)};
  const BaselineHazard nu0{data.death_support(), std::vector<double>(data.death_support().size(), 0.1)};
  ProfileConfig cfg;
  cfg.inner.rel_tol = 1e-13;
  cfg.inner.max_iter = 100000;
  const auto pv = profile_loglik(design, m, lam0, nu0, 20, cfg);

  const BaselineHazard lam{data.disease_support(), pv.lambda};
  const BaselineHazard nu{data.death_support(), pv.nu};
  const double direct = oracle_loglik(subjects, m, lam, nu, 20);
  CHECK(std::abs(pv.value - direct) < 1e-10 * std::abs(direct));
  REQUIRE(pv.subject_values.size() == subjects.size());
  CHECK(std::abs(std::accumulate(pv.subject_values.begin(), pv.subject_values.end(), 0.0) - pv.value) <
        1e-10 * std::abs(pv.value));

  // No nearby baseline does better.
  for (int trial = 0; trial < 40; ++trial) {
    BaselineHazard l2 = lam, n2 = nu;
    for (auto& v : l2.jump_sizes) v = v * std::exp(0.05 * ts::unif(g, -1, 1)) + (trial % 2 ? 1e-3 : 0.0);
    for (auto& v : n2.jump_sizes) v *= std::exp(0.05 * ts::unif(g, -1, 1));
    CHECK(oracle_loglik(subjects, m, l2, n2, 20) <= pv.value + 1e-9 * std::abs(pv.value));
  }
}

TEST_CASE("profile value matches a direct maximization over two disease jumps and one death jump") {
  // Disease support {1, 2}, death support {1.5}.
  const std::vector<Subject> subjects{
      make_subject("a", 0.0, {1.0, 2.0}, {0, 0}, 2.5, 0), make_subject("b", 1.0, {1.0, 2.0}, {0, 1}, 2.0, 0),
      make_subject("c", 0.5, {1.0, 2.0}, {1, 1}, 3.0, 0), make_subject("d", 1.0, {1.0}, {0}, 1.5, 1),
      make_subject("e", 0.0, {1.0}, {1}, 1.5, 1),         make_subject("f", 0.2, {1.0, 2.0}, {0, 0}, 2.0, 0),
      make_subject("g", 0.8, {1.0, 2.0}, {1, 0}, 2.2, 0), make_subject("h", 0.3, {1.0}, {0}, 1.8, 0)};
  const Dataset data(subjects);
  REQUIRE(data.disease_support() == std::vector<double>{1.0, 2.0});
  REQUIRE(data.death_support() == std::vector<double>{1.5});
  ModelParams m;
  m.beta = {0.4};
  m.gamma = {-0.3};
  m.sigma2 = 0.3;
  m.p = 0.9;
  m.q = 0.8;

  auto ll = [&](double l1, double l2, double v1) {
    return oracle_loglik(subjects, m, BaselineHazard{{1.0, 2.0}, {l1, l2}}, BaselineHazard{{1.5}, {v1}}, 20);
  };
  double l1 = 0.2, l2 = 0.2, v1 = 0.2;
  for (int sweep = 0; sweep < 300; ++sweep) {
    l1 = std::exp(golden_max([&](double u) { return ll(std::exp(u), l2, v1); }, -12.0, 4.0));
    l2 = std::exp(golden_max([&](double u) { return ll(l1, std::exp(u), v1); }, -12.0, 4.0));
    v1 = std::exp(golden_max([&](double u) { return ll(l1, l2, std::exp(u)); }, -12.0, 4.0));
  }
  const double best = ll(l1, l2, v1);

  const Design design(data, m.p, m.q);
  ProfileConfig cfg;
  cfg.inner.rel_tol = 1e-14;
  cfg.inner.max_iter = 200000;
  const auto pv = profile_loglik(design, m, BaselineHazard{{1.0, 2.0}, {0.5, 0.5}}, BaselineHazard{{1.5}, {0.5}}, 20,
                                 cfg);
  CHECK(std::abs(pv.value - best) < 1e-7);
  CHECK(pv.value >= best - 1e-9);
  CHECK(std::abs(pv.lambda[0] - l1) < 1e-3);
  CHECK(std::abs(pv.lambda[1] - l2) < 1e-3);
  CHECK(std::abs(pv.nu[0] - v1) < 1e-3);
}

TEST_CASE("profile standard errors") {
  const auto subjects = simulated_subjects(120, 3);
  const Dataset data(subjects);
  sim::SimSetting setting;
  FitConfig fc;
  fc.p = setting.p;
  fc.q = setting.q;
  fc.tol = 1e-5;
  const auto fitted = fit(data, fc);
  REQUIRE(fitted.converged);
  const Design design(data, fitted.theta.p, fitted.theta.q);

  ProfileConfig cfg;
  const auto se = profile_se(design, fitted, cfg);
  const std::size_t P = se.parameters.size();
  REQUIRE(P == 5);
  CHECK(se.h == doctest::Approx(1.0 / std::sqrt(120.0)));
  CHECK(se.base_value >= fitted.loglik() - 1e-8);

  // Each score column is the forward difference of an independently computed profile.
  const auto base = profile_loglik(design, fitted.theta, fitted.lambda, fitted.nu, 20, cfg);
  CHECK(std::abs(base.value - se.base_value) < 1e-9 * std::abs(base.value));
  const BaselineHazard lam_hat{design.lambda_support(), base.lambda};
  const BaselineHazard nu_hat{design.nu_support(), base.nu};
  for (std::size_t k = 0; k < P; ++k) {
    ModelParams shifted = fitted.theta;
    auto t = shifted.theta();
    t[se.parameters[k]] += se.h;
    shifted.set_theta(t);
    const auto pk = profile_loglik(design, shifted, lam_hat, nu_hat, 20, cfg);
    const double column = se.scores.col(static_cast<Eigen::Index>(k)).sum();
    CHECK(std::abs(se.base_value + se.h * column - pk.value) < 1e-6 * std::abs(pk.value));
    // The profile does not depend on where the baseline EM starts.
    const auto cold = profile_loglik(design, shifted, fitted.lambda, fitted.nu, 20, cfg);
    CHECK(std::abs(cold.value - pk.value) < 1e-3);
  }

  // Covariance is the inverse of the outer-product information.
  const Eigen::MatrixXd info = se.scores.transpose() * se.scores;
  const Eigen::MatrixXd inv = info.fullPivLu().inverse();
  CHECK((se.covariance - inv).cwiseAbs().maxCoeff() < 1e-9 * inv.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(se.covariance);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
  for (std::size_t k = 0; k < P; ++k)
    CHECK(se.se[k] == doctest::Approx(std::sqrt(se.covariance(static_cast<Eigen::Index>(k),
                                                                static_cast<Eigen::Index>(k)))));

  // Same order of magnitude as the curvature-based variance of the profile.
  const double hc = 0.1;
  for (std::size_t k = 0; k < 4; ++k) {
    auto at = [&](double delta) {
      ModelParams shifted = fitted.theta;
      auto t = shifted.theta();
      t[k] += delta;
      shifted.set_theta(t);
      return profile_loglik(design, shifted, lam_hat, nu_hat, 20, cfg).value;
    };
    const double curv = -(at(hc) - 2.0 * base.value + at(-hc)) / (hc * hc);
    REQUIRE(curv > 0.0);
    const double ratio = se.se[k] * std::sqrt(curv);
    CHECK(ratio > 0.5);
    CHECK(ratio < 2.0);
  }

  cfg.workers = 3;
  const auto par = profile_se(design, fitted, cfg);
  CHECK(par.se == se.se);

  FittedModel with_se = fitted;
  attach_se(with_se, se);
  REQUIRE(with_se.se.has_value());
  CHECK(*with_se.se == se.se);
  CHECK(with_se.covariance->rows() == 5);
}

TEST_CASE("standard errors with the random effect removed") {
  const auto subjects = simulated_subjects(80, 4);
  const Dataset data(subjects);
  sim::SimSetting setting;
  FitConfig fc;
  fc.p = setting.p;
  fc.q = setting.q;
  fc.mode = FitMode::no_rand_eff;
  auto fitted = fit(data, fc);
  const auto se = profile_se(data, fitted, ProfileConfig{});
  CHECK(se.parameters == std::vector<std::size_t>{0, 1, 2, 3});
  attach_se(fitted, se);
  CHECK((*fitted.se)[4] == 0.0);
  CHECK(fitted.covariance->row(4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fitted.covariance->col(4).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t k = 0; k < 4; ++k) CHECK((*fitted.se)[k] > 0.0);
}

TEST_CASE("profile configuration is validated") {
  std::mt19937_64 g(32);
  const Dataset data(ts::random_subjects(g, 20, ts::InstanceShape{}));
  ModelParams m = ts::random_params(g, 2);
  const Design design(data, m.p, m.q);
  const BaselineHazard lam0{data.disease_support(), std::vector<double>(data.disease_support().size(), 0.1)};
  const BaselineHazard nu0{data.death_support(), std::vector<double>(data.death_support().size(), 0.1)};

  ProfileConfig cfg;
  cfg.h_multiplier = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg.h_multiplier = -1.0;
  CHECK_THROWS_AS(profile_loglik(design, m, lam0, nu0, 20, cfg), InvalidInput);
  cfg.h_multiplier = 1.0;
  cfg.inner.rel_tol = 0.0;
  CHECK_THROWS_AS(profile_loglik(design, m, lam0, nu0, 20, cfg), InvalidInput);

  cfg.inner.rel_tol = 1e-12;
  cfg.inner.max_iter = 1;
  CHECK_THROWS_AS(profile_loglik(design, m, lam0, nu0, 20, cfg), NumericalError);

  ModelParams bad = m;
  bad.q = 1.0 - bad.p;
  cfg.inner.max_iter = 100;
  CHECK_THROWS_AS(profile_loglik(design, bad, lam0, nu0, 20, cfg), InvalidInput);
}
