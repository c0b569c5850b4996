#include "core/gp.hpp"

#include <cmath>
#include <numbers>

#include "core/rng.hpp"

namespace ksos {

namespace {

struct Chol {
  Eigen::LLT<Matrix> llt;
  bool ok = false;
};

Chol factor_noisy_gram(const Matrix& k, double nugget) {
  Matrix shifted = k;
  shifted.diagonal().array() += nugget;
  Chol out;
  out.llt.compute(shifted);
  out.ok = (out.llt.info() == Eigen::Success);
  return out;
}

double lml_from_factor(const Chol& chol, const Vector& y, const Vector& alpha) {
  const double n = static_cast<double>(y.size());
  const double log_det = 2.0 * chol.llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

}  // namespace

double GpModel::predict_mean(const Vector& x) const {
  const Matrix kx = gram_matrix(train_x, x.transpose(), kernel);
  return kx.col(0).dot(alpha);
}

double gp_log_marginal_likelihood(const Dataset& data, const KernelSpec& kernel, double nugget) {
  require(nugget > 0.0, ErrorCode::invalid_argument, "gp: nugget must be positive");
  const Matrix k = gram_matrix(data.x, data.x, kernel);
  const Chol chol = factor_noisy_gram(k, nugget);
  require(chol.ok, ErrorCode::not_positive_definite, "gp: factorization of K + nugget I failed");
  const Vector alpha = chol.llt.solve(data.y);
  return lml_from_factor(chol, data.y, alpha);
}

GpModel gp_model_at(const Dataset& data, const KernelSpec& kernel, double nugget) {
  require(nugget > 0.0, ErrorCode::invalid_argument, "gp: nugget must be positive");
  const Matrix k = gram_matrix(data.x, data.x, kernel);
  const Chol chol = factor_noisy_gram(k, nugget);
  require(chol.ok, ErrorCode::not_positive_definite, "gp: factorization of K + nugget I failed");
  GpModel model;
  model.kernel = kernel;
  model.nugget = nugget;
  model.alpha = chol.llt.solve(data.y);
  model.train_x = data.x;
  model.log_marginal_likelihood = lml_from_factor(chol, data.y, model.alpha);
  model.rkhs_norm_sq_cached = model.alpha.dot(k * model.alpha);
  return model;
}

double gp_rkhs_norm_sq(const GpModel& model) { return model.rkhs_norm_sq_cached; }

namespace {

struct SearchSpace {
  Vector lo, hi;  // log10 bounds, layout [lengthscales..., variance, nugget]
  int d = 0;

  KernelSpec kernel_of(const Vector& p) const {
    KernelSpec spec;
    spec.lengthscales.resize(d);
    for (int l = 0; l < d; ++l) spec.lengthscales(l) = std::pow(10.0, p(l));
    spec.variance = std::pow(10.0, p(d));
    return spec;
  }
  double nugget_of(const Vector& p) const { return std::pow(10.0, p(d + 1)); }
};

SearchSpace make_space(const Dataset& data, const GpFitOptions& opts) {
  const int d = data.d();
  SearchSpace sp;
  sp.d = d;
  sp.lo.resize(d + 2);
  sp.hi.resize(d + 2);
  for (int l = 0; l < d; ++l) {
    double range = data.x.col(l).maxCoeff() - data.x.col(l).minCoeff();
    if (!(range > 0.0)) range = 1.0;
    sp.lo(l) = std::log10(range) + opts.ls_lo;
    sp.hi(l) = std::log10(range) + opts.ls_hi;
  }
  const double mean_y = data.y.mean();
  double var_y = (data.y.array() - mean_y).square().sum() / std::max(1, data.n() - 1);
  if (!(var_y > 0.0)) var_y = 1.0;
  sp.lo(d) = std::log10(var_y) + opts.var_lo;
  sp.hi(d) = std::log10(var_y) + opts.var_hi;
  sp.lo(d + 1) = std::log10(var_y) + opts.nug_lo;
  sp.hi(d + 1) = std::log10(var_y) + opts.nug_hi;
  return sp;
}

}  // namespace

GpModel gp_fit(const Dataset& data, const GpFitOptions& opts) {
  require(data.n() >= 2, ErrorCode::invalid_argument, "gp_fit: need at least 2 samples");
  const SearchSpace sp = make_space(data, opts);
  const int p = sp.d + 2;

  auto evaluate = [&](const Vector& q) -> double {
    try {
      return gp_log_marginal_likelihood(data, sp.kernel_of(q), sp.nugget_of(q));
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  // Latin hypercube starts in the log box, fixed seed so fits are repeatable.
  Rng rng = Rng::stream(0x6b736f73u, Stream::gp_starts);
  std::vector<Vector> starts;
  {
    std::vector<std::vector<int>> strata(p, std::vector<int>(opts.starts));
    for (int j = 0; j < p; ++j) {
      auto& col = strata[j];
      for (int i = 0; i < opts.starts; ++i) col[i] = i;
      for (int i = opts.starts - 1; i > 0; --i)
        std::swap(col[i], col[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    for (int i = 0; i < opts.starts; ++i) {
      Vector q(p);
      for (int j = 0; j < p; ++j) {
        const double u = (strata[j][i] + rng.uniform01()) / opts.starts;
        q(j) = sp.lo(j) + u * (sp.hi(j) - sp.lo(j));
      }
      starts.push_back(q);
    }
  }

  Vector best_q;
  double best_val = -std::numeric_limits<double>::infinity();
  for (const Vector& start : starts) {
    Vector q = start;
    double val = evaluate(q);
    double step = 0.25 * (sp.hi - sp.lo).maxCoeff();
    int moves = 0;
    while (step >= opts.step_tol && moves < opts.max_moves) {
      bool improved = false;
      for (int j = 0; j < p; ++j) {
        for (const double dir : {+1.0, -1.0}) {
          Vector cand = q;
          cand(j) = std::clamp(cand(j) + dir * step, sp.lo(j), sp.hi(j));
          const double cv = evaluate(cand);
          if (cv > val) {
            q = cand;
            val = cv;
            improved = true;
            ++moves;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (val > best_val) {
      best_val = val;
      best_q = q;
    }
  }
  require(std::isfinite(best_val), ErrorCode::fit_failed, "gp_fit: every start failed factorization");
  return gp_model_at(data, sp.kernel_of(best_q), sp.nugget_of(best_q));
}

CalibratedModel baseline_constant_band(const GpModel& model, const Dataset& calib, double alpha_level) {
  auto predictor = std::make_shared<GpConstantPredictor>(model);
  return calibrate(predictor, calib, alpha_level);
}

}  // namespace ksos
