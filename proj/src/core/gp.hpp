#pragma once

#include <memory>

#include "core/conformal.hpp"
#include "core/dataset.hpp"
#include "core/kernel.hpp"

namespace ksos {

struct GpModel {
  KernelSpec kernel;  // lengthscales theta_m and signal variance
  double nugget = 1e-6;
  Vector alpha;  // (K + nugget I)^{-1} Y
  Matrix train_x;
  double log_marginal_likelihood = 0.0;
  double rkhs_norm_sq_cached = 0.0;  // alpha' K alpha

  double predict_mean(const Vector& x) const;
};

double gp_log_marginal_likelihood(const Dataset& data, const KernelSpec& kernel, double nugget);

// Builds alpha and the cached norm for explicit hyperparameters.
GpModel gp_model_at(const Dataset& data, const KernelSpec& kernel, double nugget);

// RKHS norm^2 of the posterior mean m(x) = k_x' alpha.
double gp_rkhs_norm_sq(const GpModel& model);

struct GpFitOptions {
  int starts = 8;
  double step_tol = 1e-3;   // pattern-search stop, log10 units
  int max_moves = 400;      // per start
  // log10 bound offsets relative to data scales
  double ls_lo = -2.0, ls_hi = 2.0;          // x input range
  double var_lo = -3.0, var_hi = 3.0;        // x var(Y)
  double nug_lo = -6.0, nug_hi = 1.0;        // x var(Y)
};

// Maximum-likelihood fit by multi-start coordinate pattern search over
// (lengthscales, variance, nugget) in log space. Deterministic: starts come
// from a fixed-seed Latin hypercube.
GpModel gp_fit(const Dataset& data, const GpFitOptions& opts = {});

// Homoscedastic split-CP baseline: scores |Y - m_GP(X)|, constant half-width
// q_hat. Expressed through the squared-score calibration (identical interval).
class GpConstantPredictor : public BandPredictor {
 public:
  explicit GpConstantPredictor(GpModel model) : model_(std::move(model)) {}
  double predict_mean(const Vector& x) const override { return model_.predict_mean(x); }
  double predict_scale(const Vector&) const override { return 1.0; }
  double score_floor() const override { return 1.0; }
  int input_dim() const override { return static_cast<int>(model_.train_x.cols()); }
  const GpModel& model() const { return model_; }

 private:
  GpModel model_;
};

CalibratedModel baseline_constant_band(const GpModel& model, const Dataset& calib, double alpha_level);

}  // namespace ksos
