/* ksos: adaptive conformal prediction bands via kernel sum-of-squares.
 *
 * C API over the core library. All objects are opaque handles created and
 * destroyed here; every function returns a ksos_status, with outputs through
 * pointers. On failure ksos_last_error_message() describes the most recent
 * error in the calling thread. Matrices pass as row-major double arrays.
 */
#ifndef KSOS_H
#define KSOS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef KSOS_API
#if defined(_WIN32)
#define KSOS_API __declspec(dllexport)
#else
#define KSOS_API __attribute__((visibility("default")))
#endif
#endif


typedef enum ksos_status {
  KSOS_OK = 0,
  KSOS_ERR_INVALID_ARGUMENT = 1,
  KSOS_ERR_DIMENSION = 2,
  KSOS_ERR_NOT_PSD = 3,
  KSOS_ERR_SINGULAR = 4,
  KSOS_ERR_FIT_FAILED = 5,
  KSOS_ERR_TUNE_FAILED = 6,
  KSOS_ERR_UNSUPPORTED = 7,
  KSOS_ERR_IO = 8,
  KSOS_ERR_EMPTY = 9,
  KSOS_ERR_UNKNOWN = 127
} ksos_status;

KSOS_API const char* ksos_version(void);
/* thread-local message for the last failing call */
KSOS_API const char* ksos_last_error_message(void);

/* ---- datasets ---------------------------------------------------------- */

typedef struct ksos_dataset ksos_dataset;

KSOS_API ksos_status ksos_dataset_generate(int case_id, int n, int d, uint64_t seed, ksos_dataset** out);
KSOS_API ksos_status ksos_dataset_create(int n, int d, const double* x_rowmajor, const double* y,
                                ksos_dataset** out);
KSOS_API int ksos_dataset_rows(const ksos_dataset* data);
KSOS_API int ksos_dataset_cols(const ksos_dataset* data);
/* buffers sized rows*cols and rows respectively */
KSOS_API ksos_status ksos_dataset_copy_x(const ksos_dataset* data, double* x_rowmajor);
KSOS_API ksos_status ksos_dataset_copy_y(const ksos_dataset* data, double* y);
KSOS_API void ksos_dataset_free(ksos_dataset* data);

/* exact conditional band of the synthetic case at x (length d) */
KSOS_API ksos_status ksos_oracle_band(int case_id, int d, const double* x, double alpha_level, double* lo,
                             double* hi);

/* ---- Gaussian-process pre-training ------------------------------------- */

typedef struct ksos_gp ksos_gp;

KSOS_API ksos_status ksos_gp_fit(const ksos_dataset* pretrain, ksos_gp** out);
KSOS_API ksos_status ksos_gp_predict_mean(const ksos_gp* gp, const double* x, int d, double* out);
/* any output pointer may be NULL; lengthscales needs d doubles */
KSOS_API ksos_status ksos_gp_info(const ksos_gp* gp, double* lengthscales, double* variance, double* nugget,
                         double* log_marginal_likelihood, double* rkhs_norm_sq);
KSOS_API void ksos_gp_free(ksos_gp* gp);

/* ---- kernel-SoS problem and dual solver -------------------------------- */

typedef struct ksos_problem ksos_problem;
typedef struct ksos_model ksos_model;

typedef struct ksos_hyperparams {
  double a;
  double b;
  double lambda1;
  double lambda2;
} ksos_hyperparams;

KSOS_API void ksos_hyperparams_default(ksos_hyperparams* hp); /* a=0, b=10, lambda1=lambda2=1 */

/* theta_m, s and the mean-kernel variance come from the fitted GP */
KSOS_API ksos_status ksos_problem_create(const ksos_dataset* pretrain, const ksos_gp* gp,
                                const double* theta_f, const ksos_hyperparams* hp,
                                ksos_problem** out);
/* fully explicit variant; theta_m / theta_f have length d */
KSOS_API ksos_status ksos_problem_create_explicit(const ksos_dataset* pretrain, const ksos_hyperparams* hp,
                                         double s, const double* theta_m, double variance_m,
                                         const double* theta_f, double variance_f,
                                         ksos_problem** out);
KSOS_API void ksos_problem_free(ksos_problem* prob);

typedef struct ksos_solver_config {
  double learning_rate;   /* 0.01 */
  double momentum;        /* 0.9  */
  int max_iter;           /* 10000 */
  int check_every;        /* 50   */
  double tol_constraints; /* 1e-4 */
  double tol_gap;         /* 1e-4 */
} ksos_solver_config;

KSOS_API void ksos_solver_config_default(ksos_solver_config* cfg);

typedef struct ksos_solve_diagnostics {
  int iterations;
  int converged; /* solver may stop at max_iter; the model is still usable */
  double final_gap;
  double max_violation;
  double dual_objective;
  double solve_seconds;
} ksos_solve_diagnostics;

KSOS_API ksos_status ksos_solve(const ksos_problem* prob, const ksos_solver_config* cfg, ksos_model** out,
                       ksos_solve_diagnostics* diag);

/* max relative error of the analytic dual gradient against central finite
 * differences at `num_points` random interior multiplier points */
KSOS_API ksos_status ksos_gradient_check(const ksos_problem* prob, int num_points, uint64_t seed,
                                double* max_rel_error);

KSOS_API ksos_status ksos_model_predict(const ksos_model* model, const double* x, int d, double* mean,
                               double* scale);
KSOS_API ksos_status ksos_model_diagnostics(const ksos_model* model, ksos_solve_diagnostics* diag);
KSOS_API ksos_status ksos_model_save(const ksos_model* model, const char* path);
KSOS_API ksos_status ksos_model_load(const char* path, ksos_model** out);
KSOS_API void ksos_model_free(ksos_model* model);

/* ---- split-conformal calibration --------------------------------------- */

typedef struct ksos_band ksos_band;

KSOS_API ksos_status ksos_calibrate(const ksos_model* model, const ksos_dataset* calib, double alpha_level,
                           ksos_band** out);
/* homoscedastic constant-width baseline from the GP mean */
KSOS_API ksos_status ksos_gp_baseline_band(const ksos_gp* gp, const ksos_dataset* calib, double alpha_level,
                                  ksos_band** out);
KSOS_API ksos_status ksos_band_interval(const ksos_band* band, const double* x, int d, double* lo,
                               double* hi);
/* mean and scale of the underlying predictor; either output may be NULL */
KSOS_API ksos_status ksos_band_predict(const ksos_band* band, const double* x, int d, double* mean,
                              double* scale);
KSOS_API ksos_status ksos_band_score(const ksos_band* band, const double* x, int d, double y, double* out);
KSOS_API ksos_status ksos_band_info(const ksos_band* band, double* q_hat, double* alpha_level,
                           int* calib_size);
KSOS_API ksos_status ksos_band_save(const ksos_band* band, const char* path);
KSOS_API ksos_status ksos_band_load(const char* path, ksos_band** out);
KSOS_API void ksos_band_free(ksos_band* band);

/* ---- HSIC lengthscale tuning ------------------------------------------- */

typedef struct ksos_tune_result ksos_tune_result;

typedef struct ksos_tune_config {
  int folds;        /* 0 -> 10 when n >= 100, else 5 */
  double log10_lo;  /* bounds on theta_f, log10; nan -> data-scaled default */
  double log10_hi;
  int budget;       /* max objective evaluations, >= 5 */
  uint64_t seed;
  int jobs;
} ksos_tune_config;

KSOS_API void ksos_tune_config_default(ksos_tune_config* cfg);

KSOS_API ksos_status ksos_tune_lengthscale(const ksos_dataset* pretrain, const ksos_gp* gp,
                                  const ksos_hyperparams* hp, const ksos_tune_config* tune_cfg,
                                  const ksos_solver_config* solver_cfg, ksos_tune_result** out);
KSOS_API ksos_status ksos_tune_best(const ksos_tune_result* result, double* theta_f);
KSOS_API int ksos_tune_curve_size(const ksos_tune_result* result);
/* theta buffer needs d doubles */
KSOS_API ksos_status ksos_tune_curve_point(const ksos_tune_result* result, int index, double* theta,
                                  double* hsic, double* ci_lo, double* ci_hi);
KSOS_API void ksos_tune_result_free(ksos_tune_result* result);

KSOS_API ksos_status ksos_hsic_v_statistic(const double* u, const double* v, int m, double* out);
KSOS_API ksos_status ksos_hsic_bootstrap_ci(const double* u, const double* v, int m, int n_boot,
                                   double level, uint64_t seed, double* lo, double* hi);

/* ---- adaptivity metrics ------------------------------------------------- */

KSOS_API ksos_status ksos_mean_width(const double* lo, const double* hi, int count, double* out);
KSOS_API ksos_status ksos_mutual_information_knn(const double* u_rowmajor, int m, int p, const double* v,
                                        int k_neighbors, double* out);
KSOS_API ksos_status ksos_r2_sqi(const double* abs_residuals, const double* widths, int count,
                        double alpha_level, int n_bins, double* out);
/* per-location empirical coverage, out has n_x entries */
KSOS_API ksos_status ksos_local_coverage(const ksos_band* band, int case_id, int n_x, int n_y,
                                uint64_t seed, double* out);
KSOS_API ksos_status ksos_marginal_coverage(const ksos_band* band, const ksos_dataset* test, double* out);

typedef struct ksos_metrics_config {
  int n_x;      /* 100 */
  int n_y;      /* 1000 */
  int mi_k;     /* 3 */
  int sqi_bins; /* 50 */
  uint64_t seed;
} ksos_metrics_config;

KSOS_API void ksos_metrics_config_default(ksos_metrics_config* cfg);

/* full MetricsReport as a JSON string; free with ksos_string_free */
KSOS_API ksos_status ksos_evaluate_report(const ksos_band* band, const ksos_dataset* test, int case_id,
                                 const ksos_metrics_config* cfg, char** json_out);
KSOS_API void ksos_string_free(char* str);

#ifdef __cplusplus
}
#endif

#endif /* KSOS_H */
