#include <doctest.h>

#include <cmath>
#include <numbers>

#include "core/dataset.hpp"

using namespace ksos;

TEST_CASE("generator determinism is byte identical") {
  const Dataset a = generate_case(2, 40, 3, 123);
  const Dataset b = generate_case(2, 40, 3, 123);
  CHECK((a.x.array() == b.x.array()).all());
  CHECK((a.y.array() == b.y.array()).all());
  const Dataset c = generate_case(2, 40, 3, 124);
  CHECK_FALSE((a.y.array() == c.y.array()).all());
}

TEST_CASE("case formulas at reference points") {
  Vector zero1 = Vector::Zero(1);
  CHECK(case_mean(2, zero1) == 0.0);
  CHECK(case_sigma(2, zero1) == 0.0);

  CHECK(case_mean(4, zero1) == 0.0);
  CHECK(case_sigma(4, zero1) == 1.0);

  Vector x1(1);
  x1 << 0.97;  // 10x + 1 = 10.7 > 9.6, linear branch
  CHECK(case_mean(1, x1) == doctest::Approx(0.07).epsilon(1e-12));

  x1 << 0.5;  // sinusoid branch
  const double z = 2.0 * 0.5 + 0.2;
  CHECK(case_mean(1, x1) ==
        doctest::Approx(std::sin(std::numbers::pi * z) +
                        0.2 * std::cos(4.0 * std::numbers::pi * z)));
  CHECK(case_sigma(1, x1) == doctest::Approx(std::sqrt(0.1 + 2.0 * 0.25)));

  Vector x5(5);
  x5 << 0.2, 0.4, 0.6, 0.8, 1.0;
  const Vector beta = case_beta(4, 5);
  CHECK(beta(0) == 1.0);
  CHECK(beta(4) == 0.1);
  const double proj = beta.dot(x5);
  CHECK(case_mean(4, x5) ==
        doctest::Approx(2.0 * std::sin(std::numbers::pi * proj) + std::numbers::pi * proj));

  Vector xe(1);
  xe << -0.5;
  CHECK(case_mean(5, xe) == doctest::Approx(std::sin(-1.0)));
  CHECK(case_sigma(5, xe) == doctest::Approx(-0.5));
}

TEST_CASE("unsupported case and dimension combinations") {
  CHECK_THROWS_AS(generate_case(1, 10, 2, 0), Error);
  CHECK_THROWS_AS(generate_case(5, 10, 3, 0), Error);
  CHECK_THROWS_AS(generate_case(4, 10, 2, 0), Error);
  CHECK_THROWS_AS(generate_case(6, 10, 1, 0), Error);
  CHECK_NOTHROW(generate_case(4, 10, 5, 0));
  CHECK_NOTHROW(generate_case(3, 10, 4, 0));
}

TEST_CASE("case 2 sigma moment matches quadrature oracle") {
  // E|sin Z| for Z ~ N(0,1) by Simpson integration over [-8, 8]
  const int steps = 4000;
  const double lo = -8.0, hi = 8.0;
  const double h = (hi - lo) / steps;
  auto f = [](double z) {
    return std::abs(std::sin(z)) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  };
  double integral = f(lo) + f(hi);
  for (int i = 1; i < steps; ++i) integral += f(lo + i * h) * ((i % 2) ? 4.0 : 2.0);
  integral *= h / 3.0;

  Rng rng = Rng::stream(77, Stream::generation);
  const int draws = 100000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    Vector x(1);
    x << rng.normal();
    acc += case_sigma(2, x);
  }
  acc /= draws;
  CHECK(acc == doctest::Approx(integral).epsilon(0.01));
}

TEST_CASE("oracle band hand values") {
  Vector zero1 = Vector::Zero(1);
  const auto [lo, hi] = oracle_band(4, zero1, 0.1);
  CHECK(lo == doctest::Approx(-1.6448536269514722).epsilon(1e-9));
  CHECK(hi == doctest::Approx(+1.6448536269514722).epsilon(1e-9));

  const auto [lo2, hi2] = oracle_band(2, zero1, 0.1);  // sigma = 0 here
  CHECK(lo2 == 0.0);
  CHECK(hi2 == 0.0);

  // exponential case flips when sigma < 0 but stays ordered
  Vector xneg(1);
  xneg << -0.9;
  const auto [lo5, hi5] = oracle_band(5, xneg, 0.1);
  CHECK(lo5 <= hi5);
  Vector xpos(1);
  xpos << 0.5;
  const auto [lo5b, hi5b] = oracle_band(5, xpos, 0.1);
  const double sig = case_sigma(5, xpos);
  CHECK(lo5b == doctest::Approx(case_mean(5, xpos) - sig * std::log1p(-0.05)));
  CHECK(hi5b == doctest::Approx(case_mean(5, xpos) - sig * std::log(0.05)));
}

TEST_CASE("normal_quantile inverts the normal cdf") {
  for (double p : {0.001, 0.025, 0.4, 0.5, 0.95, 0.999}) {
    const double z = normal_quantile(p);
    CHECK(0.5 * std::erfc(-z / std::numbers::sqrt2) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(normal_quantile(0.0), Error);
  CHECK_THROWS_AS(normal_quantile(1.0), Error);
}

TEST_CASE("oracle band local coverage is near the nominal level") {
  // draws from the conditional law fall inside the oracle band ~ 1 - alpha
  Rng rng = Rng::stream(5150, Stream::draws);
  Vector x(1);
  x << 0.6;
  const auto [lo, hi] = oracle_band(1, x, 0.1);
  int inside = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const double y = sample_case_output(1, x, rng);
    if (y >= lo && y <= hi) ++inside;
  }
  const double cov = static_cast<double>(inside) / draws;
  CHECK(cov == doctest::Approx(0.9).epsilon(0.01));
}
