#include "ksos/ksos.h"

#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>

#include "core/dual.hpp"
#include "core/gp.hpp"
#include "core/hsic.hpp"
#include "core/metrics.hpp"
#include "core/model_io.hpp"

namespace {

thread_local std::string g_last_error;

ksos_status map_code(ksos::ErrorCode code) {
  using ksos::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_argument: return KSOS_ERR_INVALID_ARGUMENT;
    case ErrorCode::dimension_mismatch: return KSOS_ERR_DIMENSION;
    case ErrorCode::not_positive_definite: return KSOS_ERR_NOT_PSD;
    case ErrorCode::singular_system: return KSOS_ERR_SINGULAR;
    case ErrorCode::fit_failed: return KSOS_ERR_FIT_FAILED;
    case ErrorCode::tune_failed: return KSOS_ERR_TUNE_FAILED;
    case ErrorCode::unsupported: return KSOS_ERR_UNSUPPORTED;
    case ErrorCode::io_error: return KSOS_ERR_IO;
    case ErrorCode::empty_input: return KSOS_ERR_EMPTY;
  }
  return KSOS_ERR_UNKNOWN;
}

template <typename Fn>
ksos_status guarded(Fn&& fn) {
  try {
    fn();
    return KSOS_OK;
  } catch (const ksos::Error& err) {
    g_last_error = err.what();
    return map_code(err.code());
  } catch (const std::exception& err) {
    g_last_error = err.what();
    return KSOS_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return KSOS_ERR_UNKNOWN;
  }
}

void check(bool cond, const char* what) {
  if (!cond) throw ksos::Error(ksos::ErrorCode::invalid_argument, what);
}

ksos::Vector to_vector(const double* data, int n) {
  return Eigen::Map<const ksos::Vector>(data, n);
}

}  // namespace

struct ksos_dataset {
  ksos::Dataset data;
};
struct ksos_gp {
  ksos::GpModel model;
};
struct ksos_problem {
  ksos::KsosProblem prob;
};
struct ksos_model {
  std::shared_ptr<const ksos::KsosModel> model;
};
struct ksos_band {
  ksos::CalibratedModel cal;
};
struct ksos_tune_result {
  ksos::TuneResult result;
};

extern "C" {

const char* ksos_version(void) { return "0.1.0"; }

const char* ksos_last_error_message(void) { return g_last_error.c_str(); }

/* ---- datasets ---------------------------------------------------------- */

ksos_status ksos_dataset_generate(int case_id, int n, int d, uint64_t seed, ksos_dataset** out) {
  return guarded([&] {
    check(out != nullptr, "null output pointer");
    *out = new ksos_dataset{ksos::generate_case(case_id, n, d, seed)};
  });
}

ksos_status ksos_dataset_create(int n, int d, const double* x_rowmajor, const double* y,
                                ksos_dataset** out) {
  return guarded([&] {
    check(out && x_rowmajor && y, "null pointer");
    check(n >= 1 && d >= 1, "n and d must be positive");
    ksos::Dataset data;
    data.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>(x_rowmajor, n, d);
    data.y = to_vector(y, n);
    data.meta.n = n;
    data.meta.d = d;
    *out = new ksos_dataset{std::move(data)};
  });
}

int ksos_dataset_rows(const ksos_dataset* data) { return data ? data->data.n() : 0; }
int ksos_dataset_cols(const ksos_dataset* data) { return data ? data->data.d() : 0; }

ksos_status ksos_dataset_copy_x(const ksos_dataset* data, double* x_rowmajor) {
  return guarded([&] {
    check(data && x_rowmajor, "null pointer");
    const auto& x = data->data.x;
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) x_rowmajor[i * x.cols() + j] = x(i, j);
  });
}

ksos_status ksos_dataset_copy_y(const ksos_dataset* data, double* y) {
  return guarded([&] {
    check(data && y, "null pointer");
    Eigen::Map<ksos::Vector>(y, data->data.n()) = data->data.y;
  });
}

void ksos_dataset_free(ksos_dataset* data) { delete data; }

ksos_status ksos_oracle_band(int case_id, int d, const double* x, double alpha_level, double* lo,
                             double* hi) {
  return guarded([&] {
    check(x && lo && hi, "null pointer");
    const auto band = ksos::oracle_band(case_id, to_vector(x, d), alpha_level);
    *lo = band.first;
    *hi = band.second;
  });
}

/* ---- GP ----------------------------------------------------------------- */

ksos_status ksos_gp_fit(const ksos_dataset* pretrain, ksos_gp** out) {
  return guarded([&] {
    check(pretrain && out, "null pointer");
    *out = new ksos_gp{ksos::gp_fit(pretrain->data)};
  });
}

ksos_status ksos_gp_predict_mean(const ksos_gp* gp, const double* x, int d, double* out) {
  return guarded([&] {
    check(gp && x && out, "null pointer");
    check(d == gp->model.train_x.cols(), "dimension mismatch");
    *out = gp->model.predict_mean(to_vector(x, d));
  });
}

ksos_status ksos_gp_info(const ksos_gp* gp, double* lengthscales, double* variance, double* nugget,
                         double* log_marginal_likelihood, double* rkhs_norm_sq) {
  return guarded([&] {
    check(gp != nullptr, "null pointer");
    if (lengthscales)
      Eigen::Map<ksos::Vector>(lengthscales, gp->model.kernel.lengthscales.size()) =
          gp->model.kernel.lengthscales;
    if (variance) *variance = gp->model.kernel.variance;
    if (nugget) *nugget = gp->model.nugget;
    if (log_marginal_likelihood) *log_marginal_likelihood = gp->model.log_marginal_likelihood;
    if (rkhs_norm_sq) *rkhs_norm_sq = ksos::gp_rkhs_norm_sq(gp->model);
  });
}

void ksos_gp_free(ksos_gp* gp) { delete gp; }

/* ---- problem + solver --------------------------------------------------- */

void ksos_hyperparams_default(ksos_hyperparams* hp) {
  if (hp) *hp = ksos_hyperparams{0.0, 10.0, 1.0, 1.0};
}

namespace {
ksos::HyperParams to_hyper(const ksos_hyperparams* hp) {
  ksos_hyperparams def;
  ksos_hyperparams_default(&def);
  if (!hp) hp = &def;
  return ksos::HyperParams{hp->a, hp->b, hp->lambda1, hp->lambda2};
}
}  // namespace

ksos_status ksos_problem_create(const ksos_dataset* pretrain, const ksos_gp* gp,
                                const double* theta_f, const ksos_hyperparams* hp,
                                ksos_problem** out) {
  return guarded([&] {
    check(pretrain && gp && theta_f && out, "null pointer");
    const int d = pretrain->data.d();
    // only the fitted lengthscales transfer; the GP signal variance is
    // carried by s through the norm of its posterior mean
    ksos::KernelSpec km;
    km.lengthscales = gp->model.kernel.lengthscales;
    km.variance = 1.0;
    ksos::KernelSpec kf;
    kf.lengthscales = to_vector(theta_f, d);
    kf.variance = 1.0;
    *out = new ksos_problem{ksos::make_problem(pretrain->data, to_hyper(hp),
                                               ksos::gp_rkhs_norm_sq(gp->model), km, kf)};
  });
}

ksos_status ksos_problem_create_explicit(const ksos_dataset* pretrain, const ksos_hyperparams* hp,
                                         double s, const double* theta_m, double variance_m,
                                         const double* theta_f, double variance_f,
                                         ksos_problem** out) {
  return guarded([&] {
    check(pretrain && theta_m && theta_f && out, "null pointer");
    const int d = pretrain->data.d();
    ksos::KernelSpec km, kf;
    km.lengthscales = to_vector(theta_m, d);
    km.variance = variance_m;
    kf.lengthscales = to_vector(theta_f, d);
    kf.variance = variance_f;
    *out = new ksos_problem{ksos::make_problem(pretrain->data, to_hyper(hp), s, km, kf)};
  });
}

void ksos_problem_free(ksos_problem* prob) { delete prob; }

void ksos_solver_config_default(ksos_solver_config* cfg) {
  if (cfg) *cfg = ksos_solver_config{1e-2, 0.9, 10000, 50, 1e-4, 1e-4};
}

namespace {
ksos::SolverConfig to_solver(const ksos_solver_config* cfg) {
  ksos_solver_config def;
  ksos_solver_config_default(&def);
  if (!cfg) cfg = &def;
  ksos::SolverConfig out;
  out.learning_rate = cfg->learning_rate;
  out.momentum = cfg->momentum;
  out.max_iter = cfg->max_iter;
  out.check_every = cfg->check_every;
  out.tol_constraints = cfg->tol_constraints;
  out.tol_gap = cfg->tol_gap;
  return out;
}
}  // namespace

ksos_status ksos_solve(const ksos_problem* prob, const ksos_solver_config* cfg, ksos_model** out,
                       ksos_solve_diagnostics* diag) {
  return guarded([&] {
    check(prob && out, "null pointer");
    const auto t0 = std::chrono::steady_clock::now();
    auto [state, model] = ksos::solve_dual(prob->prob, to_solver(cfg));
    const auto t1 = std::chrono::steady_clock::now();
    if (diag) {
      diag->iterations = model.diagnostics.iterations;
      diag->converged = model.diagnostics.converged ? 1 : 0;
      diag->final_gap = model.diagnostics.final_gap;
      diag->max_violation = model.diagnostics.max_violation;
      diag->dual_objective = model.diagnostics.dual_objective;
      diag->solve_seconds = std::chrono::duration<double>(t1 - t0).count();
    }
    *out = new ksos_model{std::make_shared<ksos::KsosModel>(std::move(model))};
  });
}

ksos_status ksos_gradient_check(const ksos_problem* prob, int num_points, uint64_t seed,
                                double* max_rel_error) {
  return guarded([&] {
    check(prob && max_rel_error, "null pointer");
    *max_rel_error = ksos::gradient_check(prob->prob, num_points, seed);
  });
}

ksos_status ksos_model_predict(const ksos_model* model, const double* x, int d, double* mean,
                               double* scale) {
  return guarded([&] {
    check(model && x, "null pointer");
    check(d == model->model->input_dim(), "dimension mismatch");
    const ksos::Vector xv = to_vector(x, d);
    if (mean) *mean = model->model->predict_mean(xv);
    if (scale) *scale = model->model->predict_scale(xv);
  });
}

ksos_status ksos_model_diagnostics(const ksos_model* model, ksos_solve_diagnostics* diag) {
  return guarded([&] {
    check(model && diag, "null pointer");
    const auto& d = model->model->diagnostics;
    diag->iterations = d.iterations;
    diag->converged = d.converged ? 1 : 0;
    diag->final_gap = d.final_gap;
    diag->max_violation = d.max_violation;
    diag->dual_objective = d.dual_objective;
    diag->solve_seconds = 0.0;
  });
}

ksos_status ksos_model_save(const ksos_model* model, const char* path) {
  return guarded([&] {
    check(model && path, "null pointer");
    ksos::save_model(*model->model, path);
  });
}

ksos_status ksos_model_load(const char* path, ksos_model** out) {
  return guarded([&] {
    check(path && out, "null pointer");
    *out = new ksos_model{std::make_shared<ksos::KsosModel>(ksos::load_model(path))};
  });
}

void ksos_model_free(ksos_model* model) { delete model; }

/* ---- calibration --------------------------------------------------------- */

ksos_status ksos_calibrate(const ksos_model* model, const ksos_dataset* calib, double alpha_level,
                           ksos_band** out) {
  return guarded([&] {
    check(model && calib && out, "null pointer");
    *out = new ksos_band{ksos::calibrate(model->model, calib->data, alpha_level)};
  });
}

ksos_status ksos_gp_baseline_band(const ksos_gp* gp, const ksos_dataset* calib, double alpha_level,
                                  ksos_band** out) {
  return guarded([&] {
    check(gp && calib && out, "null pointer");
    *out = new ksos_band{ksos::baseline_constant_band(gp->model, calib->data, alpha_level)};
  });
}

ksos_status ksos_band_interval(const ksos_band* band, const double* x, int d, double* lo,
                               double* hi) {
  return guarded([&] {
    check(band && x && lo && hi, "null pointer");
    check(d == band->cal.base->input_dim(), "dimension mismatch");
    const auto iv = band->cal.interval(to_vector(x, d));
    *lo = iv.first;
    *hi = iv.second;
  });
}

ksos_status ksos_band_predict(const ksos_band* band, const double* x, int d, double* mean,
                              double* scale) {
  return guarded([&] {
    check(band && x, "null pointer");
    check(d == band->cal.base->input_dim(), "dimension mismatch");
    const ksos::Vector xv = to_vector(x, d);
    if (mean) *mean = band->cal.base->predict_mean(xv);
    if (scale) *scale = band->cal.base->predict_scale(xv);
  });
}

ksos_status ksos_band_score(const ksos_band* band, const double* x, int d, double y, double* out) {
  return guarded([&] {
    check(band && x && out, "null pointer");
    check(d == band->cal.base->input_dim(), "dimension mismatch");
    *out = ksos::score(*band->cal.base, to_vector(x, d), y);
  });
}

ksos_status ksos_band_info(const ksos_band* band, double* q_hat, double* alpha_level,
                           int* calib_size) {
  return guarded([&] {
    check(band != nullptr, "null pointer");
    if (q_hat) *q_hat = band->cal.q_hat;
    if (alpha_level) *alpha_level = band->cal.alpha_level;
    if (calib_size) *calib_size = band->cal.calib_size;
  });
}

ksos_status ksos_band_save(const ksos_band* band, const char* path) {
  return guarded([&] {
    check(band && path, "null pointer");
    ksos::save_band(band->cal, path);
  });
}

ksos_status ksos_band_load(const char* path, ksos_band** out) {
  return guarded([&] {
    check(path && out, "null pointer");
    *out = new ksos_band{ksos::load_band(path)};
  });
}

void ksos_band_free(ksos_band* band) { delete band; }

/* ---- tuning -------------------------------------------------------------- */

void ksos_tune_config_default(ksos_tune_config* cfg) {
  if (cfg)
    *cfg = ksos_tune_config{0, std::nan(""), std::nan(""), 14, 0, 1};
}

ksos_status ksos_tune_lengthscale(const ksos_dataset* pretrain, const ksos_gp* gp,
                                  const ksos_hyperparams* hp, const ksos_tune_config* tune_cfg,
                                  const ksos_solver_config* solver_cfg, ksos_tune_result** out) {
  return guarded([&] {
    check(pretrain && gp && out, "null pointer");
    ksos_tune_config def;
    ksos_tune_config_default(&def);
    if (!tune_cfg) tune_cfg = &def;

    ksos::ProblemTemplate base;
    base.hyper = to_hyper(hp);
    base.s = ksos::gp_rkhs_norm_sq(gp->model);
    base.kernel_m.lengthscales = gp->model.kernel.lengthscales;
    base.kernel_m.variance = 1.0;

    ksos::TuneConfig cfg = ksos::default_tune_config(pretrain->data, tune_cfg->budget,
                                                     tune_cfg->seed);
    if (tune_cfg->folds > 0) cfg.folds = tune_cfg->folds;
    if (!std::isnan(tune_cfg->log10_lo))
      cfg.log10_lo.setConstant(tune_cfg->log10_lo);
    if (!std::isnan(tune_cfg->log10_hi))
      cfg.log10_hi.setConstant(tune_cfg->log10_hi);
    cfg.jobs = tune_cfg->jobs > 0 ? tune_cfg->jobs : 1;

    *out = new ksos_tune_result{
        ksos::tune_lengthscale(pretrain->data, base, cfg, to_solver(solver_cfg))};
  });
}

ksos_status ksos_tune_best(const ksos_tune_result* result, double* theta_f) {
  return guarded([&] {
    check(result && theta_f, "null pointer");
    Eigen::Map<ksos::Vector>(theta_f, result->result.best_lengthscale.size()) =
        result->result.best_lengthscale;
  });
}

int ksos_tune_curve_size(const ksos_tune_result* result) {
  return result ? static_cast<int>(result->result.curve.size()) : 0;
}

ksos_status ksos_tune_curve_point(const ksos_tune_result* result, int index, double* theta,
                                  double* hsic, double* ci_lo, double* ci_hi) {
  return guarded([&] {
    check(result != nullptr, "null pointer");
    check(index >= 0 && index < static_cast<int>(result->result.curve.size()),
          "curve index out of range");
    const auto& pt = result->result.curve[static_cast<std::size_t>(index)];
    if (theta) Eigen::Map<ksos::Vector>(theta, pt.theta.size()) = pt.theta;
    if (hsic) *hsic = pt.hsic;
    if (ci_lo) *ci_lo = pt.ci_lo;
    if (ci_hi) *ci_hi = pt.ci_hi;
  });
}

void ksos_tune_result_free(ksos_tune_result* result) { delete result; }

ksos_status ksos_hsic_v_statistic(const double* u, const double* v, int m, double* out) {
  return guarded([&] {
    check(u && v && out, "null pointer");
    *out = ksos::hsic_v_statistic(to_vector(u, m), to_vector(v, m));
  });
}

ksos_status ksos_hsic_bootstrap_ci(const double* u, const double* v, int m, int n_boot,
                                   double level, uint64_t seed, double* lo, double* hi) {
  return guarded([&] {
    check(u && v && lo && hi, "null pointer");
    const auto ci = ksos::hsic_bootstrap_ci(to_vector(u, m), to_vector(v, m), n_boot, level, seed);
    *lo = ci.first;
    *hi = ci.second;
  });
}

/* ---- metrics -------------------------------------------------------------- */

ksos_status ksos_mean_width(const double* lo, const double* hi, int count, double* out) {
  return guarded([&] {
    check(lo && hi && out, "null pointer");
    std::vector<std::pair<double, double>> intervals(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) intervals[static_cast<std::size_t>(i)] = {lo[i], hi[i]};
    *out = ksos::mean_width(intervals);
  });
}

ksos_status ksos_mutual_information_knn(const double* u_rowmajor, int m, int p, const double* v,
                                        int k_neighbors, double* out) {
  return guarded([&] {
    check(u_rowmajor && v && out, "null pointer");
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        u(u_rowmajor, m, p);
    *out = ksos::mutual_information_knn(u, to_vector(v, m), k_neighbors);
  });
}

ksos_status ksos_r2_sqi(const double* abs_residuals, const double* widths, int count,
                        double alpha_level, int n_bins, double* out) {
  return guarded([&] {
    check(abs_residuals && widths && out, "null pointer");
    *out = ksos::r2_sqi(to_vector(abs_residuals, count), to_vector(widths, count), alpha_level,
                        n_bins);
  });
}

ksos_status ksos_local_coverage(const ksos_band* band, int case_id, int n_x, int n_y,
                                uint64_t seed, double* out) {
  return guarded([&] {
    check(band && out, "null pointer");
    const ksos::Vector cov = ksos::local_coverage(band->cal, case_id, n_x, n_y, seed);
    Eigen::Map<ksos::Vector>(out, cov.size()) = cov;
  });
}

ksos_status ksos_marginal_coverage(const ksos_band* band, const ksos_dataset* test, double* out) {
  return guarded([&] {
    check(band && test && out, "null pointer");
    *out = ksos::marginal_coverage(band->cal, test->data);
  });
}

void ksos_metrics_config_default(ksos_metrics_config* cfg) {
  if (cfg) *cfg = ksos_metrics_config{100, 1000, 3, 50, 0};
}

ksos_status ksos_evaluate_report(const ksos_band* band, const ksos_dataset* test, int case_id,
                                 const ksos_metrics_config* cfg, char** json_out) {
  return guarded([&] {
    check(band && test && json_out, "null pointer");
    ksos_metrics_config def;
    ksos_metrics_config_default(&def);
    if (!cfg) cfg = &def;
    ksos::MetricsConfig mc;
    mc.n_x = cfg->n_x;
    mc.n_y = cfg->n_y;
    mc.mi_k = cfg->mi_k;
    mc.sqi_bins = cfg->sqi_bins;
    mc.seed = cfg->seed;
    const std::string json = ksos::metrics_report_json(
        ksos::compute_metrics_report(band->cal, test->data, case_id, mc));
    *json_out = new char[json.size() + 1];
    std::memcpy(*json_out, json.c_str(), json.size() + 1);
  });
}

void ksos_string_free(char* str) { delete[] str; }

}  // extern "C"
