#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/hsic.hpp"
#include "core/linalg.hpp"
#include "core/rng.hpp"

using namespace ksos;

TEST_CASE("energy kernel gram hand values") {
  Vector v(2);
  v << 0.0, 1.0;
  const Matrix g = energy_kernel_gram(v);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == 0.0);
  CHECK(g(1, 1) == 2.0);

  Vector c = Vector::Constant(5, -3.0);
  const Matrix gc = energy_kernel_gram(c);
  CHECK((gc.array() == 6.0).all());
}

TEST_CASE("energy kernel gram is PSD on random samples") {
  Rng rng = Rng::stream(1, Stream::instances);
  for (int trial = 0; trial < 4; ++trial) {
    Vector v(30);
    for (int i = 0; i < 30; ++i) v(i) = rng.normal() * (trial + 1);
    const Eigh es = eigh(energy_kernel_gram(v));
    CHECK(es.eigenvalues.minCoeff() >= -1e-10 * es.eigenvalues.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("hsic v-statistic hand values and exact properties") {
  Vector u(2), v(2);
  u << 0.0, 1.0;
  v << 0.0, 1.0;
  CHECK(hsic_v_statistic(u, v) == doctest::Approx(0.25).epsilon(1e-15));

  Vector constant = Vector::Constant(8, 2.5);
  Rng rng = Rng::stream(2, Stream::instances);
  Vector w(8);
  for (int i = 0; i < 8; ++i) w(i) = rng.normal();
  CHECK(hsic_v_statistic(constant, w) == 0.0);

  // joint permutation leaves the statistic unchanged; swap is exact
  Vector u2(6), v2(6);
  for (int i = 0; i < 6; ++i) {
    u2(i) = rng.normal();
    v2(i) = rng.exponential();
  }
  CHECK(hsic_v_statistic(u2, v2) == hsic_v_statistic(v2, u2));
  const double before = hsic_v_statistic(u2, v2);
  Vector u3(6), v3(6);
  const int perm[6] = {3, 0, 5, 1, 4, 2};
  for (int i = 0; i < 6; ++i) {
    u3(i) = u2(perm[i]);
    v3(i) = v2(perm[i]);
  }
  CHECK(std::abs(hsic_v_statistic(u3, v3) - before) <= 1e-12);
  CHECK(before >= -1e-12);

  CHECK_THROWS_AS(hsic_v_statistic(u2, w), Error);
}

TEST_CASE("hsic separates independence from strong dependence") {
  const int m = 500;
  Rng rng = Rng::stream(3, Stream::instances);
  std::vector<double> null_stats, dep_stats;
  for (int sim = 0; sim < 40; ++sim) {
    Vector u(m), v(m);
    for (int i = 0; i < m; ++i) {
      u(i) = rng.normal();
      v(i) = rng.normal();
    }
    null_stats.push_back(hsic_v_statistic(u, v));
    dep_stats.push_back(hsic_v_statistic(u, u));
  }
  std::sort(null_stats.begin(), null_stats.end());
  std::sort(dep_stats.begin(), dep_stats.end());
  const double null_hi = null_stats[static_cast<std::size_t>(0.95 * null_stats.size())];
  const double dep_lo = dep_stats[static_cast<std::size_t>(0.05 * dep_stats.size())];
  CHECK(null_hi < dep_lo);
  // null estimate is small relative to the self-dependence scale
  CHECK(null_hi <= 0.05 * dep_lo);
}

TEST_CASE("bootstrap confidence interval behavior") {
  Vector constant = Vector::Constant(30, 1.0);
  Vector other(30);
  Rng rng = Rng::stream(4, Stream::instances);
  for (int i = 0; i < 30; ++i) other(i) = rng.normal();
  const auto [clo, chi] = hsic_bootstrap_ci(constant, other, 200, 0.9, 5);
  CHECK(clo == 0.0);
  CHECK(chi == 0.0);

  Vector u(60), v(60);
  for (int i = 0; i < 60; ++i) {
    u(i) = rng.normal();
    v(i) = 0.8 * u(i) + 0.2 * rng.normal();
  }
  const auto [lo, hi] = hsic_bootstrap_ci(u, v, 300, 0.9, 6);
  CHECK(lo <= hi);
  CHECK(hi > 0.0);

  // interval width shrinks with the sample size on a fixed distribution
  auto width_at = [&](int m) {
    Vector uu(m), vv(m);
    Rng local = Rng::stream(7, Stream::instances);
    for (int i = 0; i < m; ++i) {
      uu(i) = local.normal();
      vv(i) = 0.5 * uu(i) + local.normal();
    }
    const auto [wlo, whi] = hsic_bootstrap_ci(uu, vv, 250, 0.9, 8);
    return whi - wlo;
  };
  CHECK(width_at(500) < width_at(50));
  CHECK_THROWS_AS(hsic_bootstrap_ci(u, v, 50, 0.9, 0), Error);
}

namespace {

Dataset smooth_dataset(int n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, Stream::generation);
  Dataset data;
  data.x.resize(n, 1);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = rng.uniform(-1.0, 1.0);
    data.y(i) = std::sin(2.0 * data.x(i, 0)) + (0.2 + 0.4 * std::abs(data.x(i, 0))) * rng.normal();
  }
  return data;
}

ProblemTemplate quick_template() {
  ProblemTemplate base;
  base.hyper = HyperParams{0.0, 10.0, 1.0, 1.0};
  base.s = 2.0;
  base.kernel_m = isotropic_kernel(0.4, 1, 0.8);
  return base;
}

SolverConfig quick_solver() {
  SolverConfig cfg;
  cfg.max_iter = 800;
  cfg.tol_constraints = 1e-3;
  cfg.tol_gap = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("cv pairs partition every index exactly once and are deterministic") {
  const Dataset data = smooth_dataset(30, 40);
  const Vector theta = Vector::Constant(1, 0.4);
  const HsicSample s1 = cv_residual_scale_pairs(data, 5, theta, quick_template(), quick_solver(), 9);
  const HsicSample s2 = cv_residual_scale_pairs(data, 5, theta, quick_template(), quick_solver(), 9);
  CHECK(s1.residuals_sq.size() == 30);
  std::vector<int> counts(5, 0);
  for (int id : s1.fold_id) {
    REQUIRE(id >= 0);
    REQUIRE(id < 5);
    ++counts[id];
  }
  for (int c : counts) CHECK(c == 6);
  CHECK((s1.residuals_sq.array() == s2.residuals_sq.array()).all());
  CHECK((s1.scales.array() == s2.scales.array()).all());
  CHECK((s1.residuals_sq.array() >= 0.0).all());
  CHECK((s1.scales.array() >= 0.0).all());

  // different seed, different fold map
  const HsicSample s3 = cv_residual_scale_pairs(data, 5, theta, quick_template(), quick_solver(), 10);
  CHECK_FALSE((s1.residuals_sq.array() == s3.residuals_sq.array()).all());

  CHECK_THROWS_AS(cv_residual_scale_pairs(data, 20, theta, quick_template(), quick_solver(), 0),
                  Error);
}

TEST_CASE("cv pairs parallel execution matches serial") {
  const Dataset data = smooth_dataset(24, 41);
  const Vector theta = Vector::Constant(1, 0.5);
  const HsicSample serial =
      cv_residual_scale_pairs(data, 4, theta, quick_template(), quick_solver(), 11, 1);
  const HsicSample parallel =
      cv_residual_scale_pairs(data, 4, theta, quick_template(), quick_solver(), 11, 4);
  CHECK((serial.residuals_sq.array() == parallel.residuals_sq.array()).all());
  CHECK((serial.scales.array() == parallel.scales.array()).all());
}

TEST_CASE("tune handles multivariate lengthscales through the hypercube branch") {
  const Dataset data = generate_case(4, 30, 5, 13);
  ProblemTemplate base = quick_template();
  base.kernel_m = isotropic_kernel(0.8, 5, 1.0);
  TuneConfig cfg = default_tune_config(data, 6, 14);
  cfg.folds = 3;
  cfg.n_boot = 100;
  SolverConfig solver = quick_solver();
  solver.max_iter = 400;
  const TuneResult result = tune_lengthscale(data, base, cfg, solver);
  REQUIRE(result.best_lengthscale.size() == 5);
  CHECK((result.best_lengthscale.array() > 0.0).all());
  CHECK(result.evaluations <= cfg.budget);
  CHECK(!result.curve.empty());
}

TEST_CASE("tune returns the curve maximum with first-candidate tie break") {
  const Dataset data = smooth_dataset(30, 42);
  TuneConfig cfg = default_tune_config(data, 9, 12);
  cfg.folds = 3;
  cfg.n_boot = 100;
  const TuneResult result = tune_lengthscale(data, quick_template(), cfg, quick_solver());
  REQUIRE(!result.curve.empty());
  CHECK(result.evaluations <= cfg.budget);
  double best = -std::numeric_limits<double>::infinity();
  for (const TunePoint& pt : result.curve) best = std::max(best, pt.hsic);
  bool found = false;
  for (const TunePoint& pt : result.curve) {
    if (pt.hsic == best &&
        (pt.theta - result.best_lengthscale).cwiseAbs().maxCoeff() <= 1e-12) {
      found = true;
      break;
    }
  }
  CHECK(found);
  // optimum beats the bound endpoints evaluated on the grid
  CHECK(best >= result.curve.front().hsic);
  CHECK(best >= result.curve[6].hsic);  // 7-point grid covers both endpoints
}
