#pragma once

#include <memory>

#include "core/dataset.hpp"
#include "core/types.hpp"

namespace ksos {

// A fitted pair (mean, scale) used to form rescaled conformity scores.
struct BandPredictor {
  virtual ~BandPredictor() = default;
  virtual double predict_mean(const Vector& x) const = 0;
  virtual double predict_scale(const Vector& x) const = 0;
  // floor applied to the scale inside scores, keeps them finite
  virtual double score_floor() const = 0;
  virtual int input_dim() const = 0;
};

// squared rescaled score (y - mean(x))^2 / max(scale(x), floor)
double score(const BandPredictor& model, const Vector& x, double y);

// k-th smallest with k = ceil((1-alpha)(m+1)); +inf when k > m, in which
// case the interval is the whole real line.
double adjusted_quantile(const std::vector<double>& scores, double alpha_level);

struct CalibratedModel {
  std::shared_ptr<const BandPredictor> base;
  double q_hat = 0.0;  // adjusted quantile of squared scores, may be +inf
  double alpha_level = 0.1;
  int calib_size = 0;

  std::pair<double, double> interval(const Vector& x) const;
};

// Calibration data must be disjoint from the data the predictor was trained
// on; that split is the caller's responsibility.
CalibratedModel calibrate(std::shared_ptr<const BandPredictor> model, const Dataset& calib,
                          double alpha_level);

std::pair<double, double> predict_interval(const CalibratedModel& cal, const Vector& x);

}  // namespace ksos
