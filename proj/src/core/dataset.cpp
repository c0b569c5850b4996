#include "core/dataset.hpp"

#include <cmath>
#include <numbers>

namespace ksos {

namespace {

constexpr double kPi = std::numbers::pi;

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

void validate_case(int case_id, int d) {
  require(d >= 1, ErrorCode::invalid_argument, "case generator: d must be >= 1");
  switch (case_id) {
    case 1:
    case 5:
      require(d == 1, ErrorCode::unsupported, "case generator: this case is one-dimensional");
      return;
    case 2:
    case 3:
      return;
    case 4:
      require(d == 1 || d == 5, ErrorCode::unsupported, "case generator: case 4 supports d in {1, 5}");
      return;
    default:
      throw Error(ErrorCode::unsupported, "case generator: case_id must be in 1..5");
  }
}

Vector case_beta(int case_id, int d) {
  if (case_id != 4) return Vector();
  if (d == 1) return Vector::Constant(1, 1.0);
  Vector beta(5);
  beta << 1.0, 0.1, 0.1, 0.1, 0.1;
  return beta;
}

double case_mean(int case_id, const Vector& x) {
  switch (case_id) {
    case 1: {
      const double t = x(0);
      if (10.0 * t + 1.0 <= 9.6)
        return std::sin(kPi * (2.0 * t + 0.2)) + 0.2 * std::cos(4.0 * kPi * (2.0 * t + 0.2));
      return t - 0.9;
    }
    case 2:
    case 3:
      return 0.5 * x.sum();
    case 4: {
      const double z = case_beta(4, static_cast<int>(x.size())).dot(x);
      return 2.0 * std::sin(kPi * z) + kPi * z;
    }
    case 5:
      return std::sin(2.0 * x(0));
    default:
      throw Error(ErrorCode::unsupported, "case_mean: unknown case");
  }
}

double case_sigma(int case_id, const Vector& x) {
  switch (case_id) {
    case 1:
      return std::sqrt(0.1 + 2.0 * x(0) * x(0));
    case 2:
      return x.array().sin().abs().sum();
    case 3:
      return (4.0 / 3.0) * (x.array() * (2.0 / 3.0)).unaryExpr([](double z) { return std_normal_pdf(z); }).sum();
    case 4: {
      const double z = case_beta(4, static_cast<int>(x.size())).dot(x);
      return std::sqrt(1.0 + z * z);
    }
    case 5:
      return 0.5 + 2.0 * x(0);
    default:
      throw Error(ErrorCode::unsupported, "case_sigma: unknown case");
  }
}

Vector sample_case_input(int case_id, int d, Rng& rng) {
  Vector x(d);
  switch (case_id) {
    case 1:
    case 5:
      for (int l = 0; l < d; ++l) x(l) = rng.uniform(-1.0, 1.0);
      return x;
    case 2:
    case 3:
      for (int l = 0; l < d; ++l) x(l) = rng.normal();
      return x;
    case 4:
      for (int l = 0; l < d; ++l) x(l) = rng.uniform(0.0, 1.0);
      return x;
    default:
      throw Error(ErrorCode::unsupported, "sample_case_input: unknown case");
  }
}

double sample_case_output(int case_id, const Vector& x, Rng& rng) {
  const double eps = (case_id == 5) ? rng.exponential() : rng.normal();
  return case_mean(case_id, x) + case_sigma(case_id, x) * eps;
}

Dataset generate_case(int case_id, int n, int d, std::uint64_t seed) {
  validate_case(case_id, d);
  require(n >= 1, ErrorCode::invalid_argument, "generate_case: n must be >= 1");
  Rng rng = Rng::stream(seed, Stream::generation);
  Dataset data;
  data.x.resize(n, d);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const Vector xi = sample_case_input(case_id, d, rng);
    data.x.row(i) = xi;
    data.y(i) = sample_case_output(case_id, xi, rng);
  }
  data.meta = DatasetMeta{case_id, seed, n, d, case_beta(case_id, d)};
  return data;
}

std::pair<double, double> oracle_band(int case_id, const Vector& x, double alpha_level) {
  validate_case(case_id, static_cast<int>(x.size()));
  require(alpha_level > 0.0 && alpha_level < 1.0, ErrorCode::invalid_argument,
          "oracle_band: alpha_level must be in (0,1)");
  const double m = case_mean(case_id, x);
  const double sig = case_sigma(case_id, x);
  if (case_id == 5) {
    // equal-tailed interval of the conditional exponential law; sigma may be
    // negative here, which flips the interval
    const double q_lo = -std::log1p(-alpha_level / 2.0);
    const double q_hi = -std::log(alpha_level / 2.0);
    const double lo = m + sig * q_lo;
    const double hi = m + sig * q_hi;
    return (lo <= hi) ? std::make_pair(lo, hi) : std::make_pair(hi, lo);
  }
  const double z = normal_quantile(1.0 - alpha_level / 2.0);
  return {m - z * sig, m + z * sig};
}

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorCode::invalid_argument, "normal_quantile: p must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std_normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace ksos
