#include "core/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ksos {

double mean_width(const std::vector<std::pair<double, double>>& intervals) {
  require(!intervals.empty(), ErrorCode::empty_input, "mean_width: no intervals");
  double acc = 0.0;
  for (const auto& [lo, hi] : intervals) {
    require(lo <= hi, ErrorCode::invalid_argument, "mean_width: interval with lo > hi");
    acc += hi - lo;
  }
  return acc / static_cast<double>(intervals.size());
}

namespace {

double digamma(double x) {
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))));
}

}  // namespace

double mutual_information_knn(const Matrix& u, const Vector& v, int k_neighbors) {
  const auto m = u.rows();
  require(v.size() == m, ErrorCode::dimension_mismatch, "mi_knn: sample sizes differ");
  require(k_neighbors >= 1 && m > k_neighbors, ErrorCode::invalid_argument,
          "mi_knn: need M > k >= 1");

  // pairwise max-norm distances in the marginals
  Matrix du(m, m), dv(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    du(i, i) = 0.0;
    dv(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double dist_u = (u.row(i) - u.row(j)).cwiseAbs().maxCoeff();
      const double dist_v = std::abs(v(i) - v(j));
      du(i, j) = dist_u;
      du(j, i) = dist_u;
      dv(i, j) = dist_v;
      dv(j, i) = dist_v;
    }
  }

  double acc = 0.0;
  std::vector<double> joint(m);
  bool any_positive = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) joint[j] = std::max(du(i, j), dv(i, j));
    joint[i] = std::numeric_limits<double>::infinity();  // exclude self
    std::vector<double> dists = joint;
    std::nth_element(dists.begin(), dists.begin() + (k_neighbors - 1), dists.end());
    const double eps = dists[k_neighbors - 1];
    if (eps > 0.0) any_positive = true;
    int n_u = 0, n_v = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      if (du(i, j) < eps) ++n_u;
      if (dv(i, j) < eps) ++n_v;
    }
    acc += digamma(n_u + 1) + digamma(n_v + 1);
  }
  require(any_positive, ErrorCode::invalid_argument, "mi_knn: degenerate sample (all points identical)");

  const double est = digamma(k_neighbors) + digamma(static_cast<double>(m)) -
                     acc / static_cast<double>(m);
  return std::max(0.0, est);
}

namespace {

double order_quantile(std::vector<double> values, double level) {
  const auto g = values.size();
  const auto k = static_cast<std::size_t>(
      std::clamp(std::ceil(level * static_cast<double>(g)), 1.0, static_cast<double>(g)));
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
  return values[k - 1];
}

double median_of(std::vector<double> values) {
  const auto g = values.size();
  std::sort(values.begin(), values.end());
  return (g % 2 == 1) ? values[g / 2] : 0.5 * (values[g / 2 - 1] + values[g / 2]);
}

}  // namespace

double r2_sqi(const Vector& abs_residuals, const Vector& widths, double alpha_level, int n_bins) {
  const auto t = abs_residuals.size();
  require(widths.size() == t, ErrorCode::dimension_mismatch, "r2_sqi: sample sizes differ");
  require(n_bins >= 2, ErrorCode::invalid_argument, "r2_sqi: need n_bins >= 2");
  require(t >= 2 * static_cast<Eigen::Index>(n_bins), ErrorCode::invalid_argument,
          "r2_sqi: need at least 2 points per bin");

  std::vector<int> order(t);
  for (Eigen::Index i = 0; i < t; ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return widths(a) < widths(b); });

  std::vector<double> bin_width, bin_resid;
  for (int bin = 0; bin < n_bins; ++bin) {
    const auto lo = (t * bin) / n_bins;
    const auto hi = (t * (bin + 1)) / n_bins;
    if (hi <= lo) continue;
    std::vector<double> w, r;
    for (auto idx = lo; idx < hi; ++idx) {
      w.push_back(widths(order[idx]));
      r.push_back(abs_residuals(order[idx]));
    }
    bin_width.push_back(median_of(std::move(w)));
    bin_resid.push_back(order_quantile(std::move(r), 1.0 - alpha_level));
  }

  // no-intercept fit of per-bin median widths on per-bin residual quantiles;
  // constant widths with varying residuals then collapse to -inf, matching
  // the reported behavior of constant bands
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t g = 0; g < bin_width.size(); ++g) {
    sxy += bin_width[g] * bin_resid[g];
    sxx += bin_resid[g] * bin_resid[g];
  }
  const double beta = (sxx > 0.0) ? sxy / sxx : 0.0;
  double y_mean = 0.0;
  for (double y : bin_width) y_mean += y;
  y_mean /= static_cast<double>(bin_width.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t g = 0; g < bin_width.size(); ++g) {
    const double e = bin_width[g] - beta * bin_resid[g];
    ss_res += e * e;
    const double c = bin_width[g] - y_mean;
    ss_tot += c * c;
  }
  if (ss_tot == 0.0) return (ss_res == 0.0) ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

Vector local_coverage(const BandFunction& band, int case_id, int d, int n_x, int n_y,
                      std::uint64_t seed) {
  validate_case(case_id, d);
  require(n_x >= 1 && n_y >= 1, ErrorCode::invalid_argument, "local_coverage: need n_x, n_y >= 1");
  Rng loc_rng = Rng::stream(seed, Stream::locations);
  Vector out(n_x);
  for (int i = 0; i < n_x; ++i) {
    const Vector x = sample_case_input(case_id, d, loc_rng);
    const auto [lo, hi] = band(x);
    Rng draw_rng = Rng::stream(seed, Stream::draws, static_cast<std::uint64_t>(i));
    int inside = 0;
    for (int j = 0; j < n_y; ++j) {
      const double y = sample_case_output(case_id, x, draw_rng);
      if (y >= lo && y <= hi) ++inside;
    }
    out(i) = static_cast<double>(inside) / static_cast<double>(n_y);
  }
  return out;
}

Vector local_coverage(const CalibratedModel& cal, int case_id, int n_x, int n_y,
                      std::uint64_t seed) {
  const int d = cal.base->input_dim();
  return local_coverage([&](const Vector& x) { return cal.interval(x); }, case_id, d, n_x, n_y,
                        seed);
}

double marginal_coverage(const CalibratedModel& cal, const Dataset& test) {
  require(test.n() > 0, ErrorCode::empty_input, "marginal_coverage: empty test set");
  int inside = 0;
  for (int i = 0; i < test.n(); ++i) {
    const auto [lo, hi] = cal.interval(test.x.row(i));
    if (test.y(i) >= lo && test.y(i) <= hi) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(test.n());
}

MetricsReport compute_metrics_report(const CalibratedModel& cal, const Dataset& test, int case_id,
                                     const MetricsConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricsReport report;

  const int m = test.n();
  Vector widths(m), abs_resid(m), scores(m);
  std::vector<std::pair<double, double>> intervals(m);
  int covered = 0;
  for (int i = 0; i < m; ++i) {
    const Vector x = test.x.row(i);
    intervals[i] = cal.interval(x);
    widths(i) = intervals[i].second - intervals[i].first;
    abs_resid(i) = std::abs(test.y(i) - cal.base->predict_mean(x));
    scores(i) = score(*cal.base, x, test.y(i));
    if (test.y(i) >= intervals[i].first && test.y(i) <= intervals[i].second) ++covered;
  }
  report.mean_width = mean_width(intervals);
  report.marginal_coverage = static_cast<double>(covered) / m;
  report.mutual_information = mutual_information_knn(test.x, scores, cfg.mi_k);

  const bool finite_widths = widths.allFinite();
  const bool constant_widths =
      finite_widths && (widths.maxCoeff() - widths.minCoeff() <= 1e-12 * (1.0 + report.mean_width));
  if (finite_widths && !constant_widths && m >= 2 * cfg.sqi_bins) {
    report.r2_sqi = r2_sqi(abs_resid, widths, cal.alpha_level, cfg.sqi_bins);
    report.r2_valid = true;
  }

  report.local_coverage_samples = local_coverage(cal, case_id, cfg.n_x, cfg.n_y, cfg.seed);

  const auto t1 = std::chrono::steady_clock::now();
  report.timings["evaluate_seconds"] = std::chrono::duration<double>(t1 - t0).count();
  return report;
}

}  // namespace ksos
