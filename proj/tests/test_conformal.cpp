#include <doctest.h>

#include <cmath>

#include "core/conformal.hpp"
#include "core/rng.hpp"

using namespace ksos;

namespace {

// fixed mean/scale functions for exercising the calibration path
struct StubPredictor : BandPredictor {
  std::function<double(double)> mean_fn = [](double) { return 0.0; };
  std::function<double(double)> scale_fn = [](double) { return 1.0; };
  double predict_mean(const Vector& x) const override { return mean_fn(x(0)); }
  double predict_scale(const Vector& x) const override { return scale_fn(x(0)); }
  double score_floor() const override { return 1e-12; }
  int input_dim() const override { return 1; }
};

Dataset make_calib(const std::vector<double>& xs, const std::vector<double>& ys) {
  Dataset data;
  data.x.resize(static_cast<int>(xs.size()), 1);
  data.y.resize(static_cast<int>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    data.x(static_cast<int>(i), 0) = xs[i];
    data.y(static_cast<int>(i)) = ys[i];
  }
  return data;
}

}  // namespace

TEST_CASE("adjusted quantile index arithmetic") {
  std::vector<double> scores;
  for (int i = 1; i <= 19; ++i) scores.push_back(i);
  CHECK(adjusted_quantile(scores, 0.1) == 18.0);

  std::vector<double> nine = {5, 3, 9, 1, 7, 2, 8, 4, 6};
  CHECK(adjusted_quantile(nine, 0.1) == 9.0);  // k = ceil(0.9 * 10) = 9 -> max

  CHECK(std::isinf(adjusted_quantile({0.5}, 0.1)));
  CHECK_THROWS_AS(adjusted_quantile({}, 0.1), Error);
  CHECK_THROWS_AS(adjusted_quantile({1.0}, 0.0), Error);
}

TEST_CASE("adjusted quantile never increases with alpha") {
  Rng rng = Rng::stream(3, Stream::instances);
  std::vector<double> scores(37);
  for (double& s : scores) s = rng.exponential();
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.02, 0.05, 0.1, 0.2, 0.5, 0.9}) {
    const double q = adjusted_quantile(scores, alpha);
    CHECK(q <= prev);
    prev = q;
  }
}

TEST_CASE("score values and homogeneity") {
  StubPredictor model;
  Vector x(1);
  x << 0.3;
  CHECK(score(model, x, model.predict_mean(x)) == 0.0);

  model.scale_fn = [](double) { return 4.0; };
  CHECK(score(model, x, 2.0) == doctest::Approx(1.0));

  // scaling residual by c and scale by c^2 leaves the score unchanged
  StubPredictor scaled;
  const double c = 3.7;
  scaled.mean_fn = model.mean_fn;
  scaled.scale_fn = [&](double) { return 4.0 * c * c; };
  CHECK(score(scaled, x, 2.0 * c) == doctest::Approx(score(model, x, 2.0)).epsilon(1e-12));
}

TEST_CASE("calibrate on an interpolating model gives zero-width intervals") {
  auto model = std::make_shared<StubPredictor>();
  model->mean_fn = [](double x) { return std::sin(x); };
  std::vector<double> xs, ys;
  for (int i = 0; i < 30; ++i) {
    xs.push_back(0.1 * i);
    ys.push_back(std::sin(0.1 * i));
  }
  const CalibratedModel cal = calibrate(model, make_calib(xs, ys), 0.1);
  CHECK(cal.q_hat == 0.0);
  Vector x(1);
  x << 1.234;
  const auto [lo, hi] = cal.interval(x);
  CHECK(lo == hi);
  CHECK(lo == doctest::Approx(std::sin(1.234)));
}

TEST_CASE("constant scale reduces to split CP on squared residuals") {
  auto model = std::make_shared<StubPredictor>();
  Rng rng = Rng::stream(4, Stream::instances);
  std::vector<double> xs(25), ys(25), abs_resid(25);
  for (int i = 0; i < 25; ++i) {
    xs[i] = rng.uniform(-1, 1);
    ys[i] = rng.normal();
    abs_resid[i] = std::abs(ys[i]);
  }
  const CalibratedModel cal = calibrate(model, make_calib(xs, ys), 0.1);
  // quantile commutes with the square on the positive half-line
  const double q_abs = adjusted_quantile(abs_resid, 0.1);
  CHECK(std::sqrt(cal.q_hat) == doctest::Approx(q_abs).epsilon(1e-12));
  Vector x(1);
  x << 0.0;
  const auto [lo, hi] = cal.interval(x);
  CHECK(hi == doctest::Approx(q_abs));
}

TEST_CASE("interval arithmetic and the infinite sentinel") {
  auto model = std::make_shared<StubPredictor>();
  model->scale_fn = [](double) { return 4.0; };
  CalibratedModel cal;
  cal.base = model;
  cal.q_hat = 1.0;
  cal.alpha_level = 0.1;
  Vector x(1);
  x << 0.0;
  auto [lo, hi] = predict_interval(cal, x);
  CHECK(lo == doctest::Approx(-2.0));
  CHECK(hi == doctest::Approx(2.0));

  cal.q_hat = std::numeric_limits<double>::infinity();
  std::tie(lo, hi) = predict_interval(cal, x);
  CHECK(std::isinf(lo));
  CHECK(std::isinf(hi));
  CHECK(lo < hi);

  // one calibration point cannot support alpha = 0.1
  const CalibratedModel tiny = calibrate(model, make_calib({0.0}, {1.0}), 0.1);
  CHECK(std::isinf(tiny.q_hat));
}

TEST_CASE("half-width scales as the square root of the scale function") {
  auto narrow = std::make_shared<StubPredictor>();
  narrow->scale_fn = [](double) { return 1.3; };
  auto wide = std::make_shared<StubPredictor>();
  const double c = 2.5;
  wide->scale_fn = [&](double) { return 1.3 * c * c; };
  CalibratedModel cal_narrow, cal_wide;
  cal_narrow.base = narrow;
  cal_wide.base = wide;
  cal_narrow.q_hat = cal_wide.q_hat = 0.7;
  Vector x = Vector::Zero(1);
  const auto [nlo, nhi] = cal_narrow.interval(x);
  const auto [wlo, whi] = cal_wide.interval(x);
  CHECK(whi - wlo == doctest::Approx(c * (nhi - nlo)).epsilon(1e-12));
}

TEST_CASE("marginal coverage over replications matches split CP") {
  // trivial predictor, iid data; exact coverage is >= 1 - alpha with spread
  // bounded by the binomial standard error of the replication average
  const double alpha = 0.1;
  const int m = 50, n_test = 200, reps = 100;
  double total = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng = Rng::stream(1000 + rep, Stream::generation);
    auto model = std::make_shared<StubPredictor>();
    std::vector<double> xs(m), ys(m);
    for (int i = 0; i < m; ++i) {
      xs[i] = rng.uniform(-1, 1);
      ys[i] = rng.normal();
    }
    const CalibratedModel cal = calibrate(model, make_calib(xs, ys), alpha);
    int inside = 0;
    Vector x(1);
    for (int i = 0; i < n_test; ++i) {
      x(0) = rng.uniform(-1, 1);
      const double y = rng.normal();
      const auto [lo, hi] = cal.interval(x);
      if (y >= lo && y <= hi) ++inside;
    }
    total += static_cast<double>(inside) / n_test;
  }
  const double mean_cov = total / reps;
  // exact split-CP coverage for m = 50, alpha = 0.1: in [0.9, 0.92]
  const double se = std::sqrt(0.9 * 0.1 / (reps * n_test)) + 0.04 / std::sqrt(reps);
  CHECK(mean_cov >= 0.9 - 2.0 * se);
  CHECK(mean_cov <= 0.92 + 2.0 * se);
}
