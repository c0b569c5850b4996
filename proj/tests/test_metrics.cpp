#include <doctest.h>

#include <cmath>

#include "core/metrics.hpp"
#include "core/rng.hpp"

using namespace ksos;

TEST_CASE("mean width values and error paths") {
  CHECK(mean_width({{0.0, 2.0}, {1.0, 5.0}}) == doctest::Approx(3.0));
  CHECK(mean_width({{1.0, 1.0}, {-2.0, -2.0}}) == 0.0);

  Rng rng = Rng::stream(1, Stream::instances);
  std::vector<std::pair<double, double>> intervals;
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double lo = rng.normal();
    const double w = rng.exponential();
    intervals.push_back({lo, lo + w});
    acc += w;
  }
  CHECK(mean_width(intervals) == doctest::Approx(acc / 5.0).epsilon(1e-12));

  const double inf = std::numeric_limits<double>::infinity();
  intervals.push_back({-inf, inf});
  CHECK(std::isinf(mean_width(intervals)));

  CHECK_THROWS_AS(mean_width({}), Error);
  CHECK_THROWS_AS(mean_width({{1.0, 0.0}}), Error);
}

TEST_CASE("kNN mutual information null and strong dependence") {
  const int m = 2000;
  Rng rng = Rng::stream(2, Stream::instances);
  Matrix u(m, 1);
  Vector v(m);
  for (int i = 0; i < m; ++i) {
    u(i, 0) = rng.normal();
    v(i) = rng.normal();
  }
  CHECK(mutual_information_knn(u, v, 3) <= 0.05);

  Vector same = u.col(0);
  CHECK(mutual_information_knn(u, same, 3) >= 2.0);
}

TEST_CASE("kNN mutual information is stable under monotone transforms") {
  const int m = 2000;
  Rng rng = Rng::stream(3, Stream::instances);
  Matrix u(m, 1);
  Vector v(m);
  for (int i = 0; i < m; ++i) {
    u(i, 0) = rng.normal();
    v(i) = 0.8 * u(i, 0) + 0.6 * rng.normal();
  }
  const double base = mutual_information_knn(u, v, 3);
  const Vector warped = (v.array() * 0.5).exp();
  const double after = mutual_information_knn(u, warped, 3);
  CHECK(std::abs(base - after) <= 0.05);
  CHECK(base > 0.2);  // clearly dependent pair
}

TEST_CASE("kNN mutual information rejects degenerate input") {
  Matrix u = Matrix::Zero(10, 1);
  Vector v = Vector::Zero(10);
  CHECK_THROWS_AS(mutual_information_knn(u, v, 3), Error);
  CHECK_THROWS_AS(mutual_information_knn(u, v, 0), Error);
  CHECK_THROWS_AS(mutual_information_knn(u, v, 10), Error);
}

TEST_CASE("r2_sqi is one on proportional inputs and negative on constant widths") {
  // widths constant within each bin, residuals proportional: every bin pair
  // (residual quantile, median width) sits exactly on a line through zero
  const int t = 200, bins = 10;
  Vector widths(t), resid(t);
  for (int i = 0; i < t; ++i) {
    widths(i) = 1.0 + static_cast<double>(i / (t / bins));
    resid(i) = 0.37 * widths(i);
  }
  CHECK(r2_sqi(resid, widths, 0.1, bins) == doctest::Approx(1.0).epsilon(1e-9));

  Vector const_widths = Vector::Constant(t, 2.0);
  Vector varying(t);
  for (int i = 0; i < t; ++i) varying(i) = 0.1 + 2.0 * i / t;
  CHECK(r2_sqi(varying, const_widths, 0.1, bins) < 0.0);
}

TEST_CASE("r2_sqi is invariant to joint positive scaling") {
  const int t = 150;
  Rng rng = Rng::stream(5, Stream::instances);
  Vector widths(t), resid(t);
  for (int i = 0; i < t; ++i) {
    widths(i) = 0.5 + rng.exponential();
    resid(i) = 0.2 * widths(i) + 0.3 * rng.exponential();
  }
  const double base = r2_sqi(resid, widths, 0.1, 12);
  const double scaled = r2_sqi(7.3 * resid, 7.3 * widths, 0.1, 12);
  CHECK(std::abs(base - scaled) <= 1e-10);
  CHECK_THROWS_AS(r2_sqi(resid, widths, 0.1, 1), Error);
  CHECK_THROWS_AS(r2_sqi(resid.head(10), widths.head(10), 0.1, 12), Error);
}

TEST_CASE("local coverage of the oracle band concentrates at the level") {
  const int n_x = 25, n_y = 400;
  const Vector cov = local_coverage(
      [](const Vector& x) { return oracle_band(2, x, 0.1); }, 2, 1, n_x, n_y, 6);
  REQUIRE(cov.size() == n_x);
  const double se = std::sqrt(0.9 * 0.1 / n_y);
  for (int i = 0; i < n_x; ++i) {
    CHECK(cov(i) >= 0.9 - 4.0 * se);
    CHECK(cov(i) <= std::min(1.0, 0.9 + 4.0 * se) + 1e-12);
  }
  CHECK(std::abs(cov.mean() - 0.9) <= 0.01);
}

TEST_CASE("local coverage of the infinite band is exactly one") {
  const double inf = std::numeric_limits<double>::infinity();
  const Vector cov = local_coverage(
      [&](const Vector&) { return std::make_pair(-inf, inf); }, 1, 1, 10, 50, 7);
  CHECK((cov.array() == 1.0).all());
}

namespace {

struct FixedBand : BandPredictor {
  double width = 0.0;
  double predict_mean(const Vector& x) const override { return x(0); }
  double predict_scale(const Vector&) const override { return width * width; }
  double score_floor() const override { return 1e-12; }
  int input_dim() const override { return 1; }
};

}  // namespace

TEST_CASE("marginal coverage endpoints") {
  Dataset test;
  test.x.resize(20, 1);
  test.y.resize(20);
  Rng rng = Rng::stream(8, Stream::instances);
  for (int i = 0; i < 20; ++i) {
    test.x(i, 0) = rng.uniform(-1, 1);
    test.y(i) = test.x(i, 0) + rng.normal();
  }
  CalibratedModel cal;
  cal.base = std::make_shared<FixedBand>();
  cal.alpha_level = 0.1;
  cal.q_hat = std::numeric_limits<double>::infinity();
  CHECK(marginal_coverage(cal, test) == 1.0);
  cal.q_hat = 0.0;
  CHECK(marginal_coverage(cal, test) == 0.0);
  CHECK_THROWS_AS(marginal_coverage(cal, Dataset{}), Error);
}
