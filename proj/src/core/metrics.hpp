#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "core/conformal.hpp"
#include "core/dataset.hpp"

namespace ksos {

// average interval width; any infinite interval makes the mean +inf
double mean_width(const std::vector<std::pair<double, double>>& intervals);

// Kraskov kNN estimator (variant 1, max-norm, digamma corrections) between a
// p-dimensional sample u and a scalar sample v; clipped below at 0.
double mutual_information_knn(const Matrix& u, const Vector& v, int k_neighbors);

// Determination coefficient of the no-intercept fit of per-bin residual
// quantiles on per-bin median widths; bins are equal-count groups by width.
double r2_sqi(const Vector& abs_residuals, const Vector& widths, double alpha_level, int n_bins);

using BandFunction = std::function<std::pair<double, double>(const Vector&)>;

// Fraction of n_y fresh draws of Y | X = x inside the band, at n_x random
// input locations from the case's distribution.
Vector local_coverage(const BandFunction& band, int case_id, int d, int n_x, int n_y,
                      std::uint64_t seed);
Vector local_coverage(const CalibratedModel& cal, int case_id, int n_x, int n_y,
                      std::uint64_t seed);

double marginal_coverage(const CalibratedModel& cal, const Dataset& test);

struct MetricsConfig {
  int n_x = 100;
  int n_y = 1000;
  int mi_k = 3;
  int sqi_bins = 50;
  std::uint64_t seed = 0;
};

struct MetricsReport {
  double mean_width = 0.0;
  double mutual_information = 0.0;
  double r2_sqi = 0.0;
  bool r2_valid = false;  // omitted for constant-width bands
  Vector local_coverage_samples;
  double marginal_coverage = 0.0;
  std::map<std::string, double> timings;
};

MetricsReport compute_metrics_report(const CalibratedModel& cal, const Dataset& test, int case_id,
                                     const MetricsConfig& cfg);

}  // namespace ksos
