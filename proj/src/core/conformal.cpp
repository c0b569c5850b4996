#include "core/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ksos {

double score(const BandPredictor& model, const Vector& x, double y) {
  const double r = y - model.predict_mean(x);
  const double f = std::max(model.predict_scale(x), model.score_floor());
  return r * r / f;
}

double adjusted_quantile(const std::vector<double>& scores, double alpha_level) {
  require(!scores.empty(), ErrorCode::empty_input, "adjusted_quantile: empty scores");
  require(alpha_level > 0.0 && alpha_level < 1.0, ErrorCode::invalid_argument,
          "adjusted_quantile: alpha_level must be in (0,1)");
  const auto m = scores.size();
  const auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha_level) * static_cast<double>(m + 1)));
  if (k > m) return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(scores);
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  return sorted[k - 1];
}

CalibratedModel calibrate(std::shared_ptr<const BandPredictor> model, const Dataset& calib,
                          double alpha_level) {
  require(model != nullptr, ErrorCode::invalid_argument, "calibrate: null predictor");
  require(calib.n() > 0, ErrorCode::empty_input, "calibrate: empty calibration set");
  require(calib.d() == model->input_dim(), ErrorCode::dimension_mismatch,
          "calibrate: calibration dimension mismatch");
  std::vector<double> scores(calib.n());
  for (int i = 0; i < calib.n(); ++i) scores[i] = score(*model, calib.x.row(i), calib.y(i));
  CalibratedModel cal;
  cal.base = std::move(model);
  cal.q_hat = adjusted_quantile(scores, alpha_level);
  cal.alpha_level = alpha_level;
  cal.calib_size = calib.n();
  return cal;
}

std::pair<double, double> CalibratedModel::interval(const Vector& x) const {
  if (std::isinf(q_hat)) {
    const double inf = std::numeric_limits<double>::infinity();
    return {-inf, inf};
  }
  const double m = base->predict_mean(x);
  const double f = std::max(base->predict_scale(x), 0.0);
  const double h = std::sqrt(q_hat * f);
  return {m - h, m + h};
}

std::pair<double, double> predict_interval(const CalibratedModel& cal, const Vector& x) {
  return cal.interval(x);
}

}  // namespace ksos
