// Command-line front end over the ksos C API: data simulation, lengthscale
// tuning, fitting, calibration, evaluation, benchmark reproduction and solver
// self-checks. Configuration precedence: flag > config file > default.
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ksos/ksos.h"
#include "cli_util.hpp"

namespace {

using cli::ConfigMap;
using cli::fmt;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheckFailed = 2;

void ok(ksos_status status, const std::string& what) {
  if (status != KSOS_OK)
    throw std::runtime_error(what + ": " + ksos_last_error_message());
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    token = cli::trim(token);
    if (token.empty()) continue;
    out.push_back(std::stod(token));
  }
  if (out.empty()) throw std::runtime_error("expected a comma-separated number list: " + text);
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  // "1,2,4" and ranges "0-19"
  std::vector<int> out;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    token = cli::trim(token);
    if (token.empty()) continue;
    const auto dash = token.find('-', 1);
    if (dash != std::string::npos) {
      const int lo = std::stoi(token.substr(0, dash));
      const int hi = std::stoi(token.substr(dash + 1));
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(std::stoi(token));
    }
  }
  if (out.empty()) throw std::runtime_error("expected an integer list: " + text);
  return out;
}

// All settings a run can carry, resolved from flags, config file and defaults.
struct RunConfig {
  int case_id = 1;
  int n = 100;
  int m = 200;
  int n_test = 1000;
  int d = 1;
  uint64_t seed = 0;
  ksos_hyperparams hyper{0.0, 10.0, 1.0, 1.0};
  ksos_solver_config solver{1e-2, 0.9, 10000, 50, 1e-4, 1e-4};
  ksos_tune_config tuning{0, std::nan(""), std::nan(""), 14, 0, 1};
  ksos_metrics_config metrics{100, 1000, 3, 50, 0};
  double alpha = 0.1;
  std::vector<double> theta_f;  // empty -> per-case default or tuned
  bool tune = false;
  int jobs = 1;
  bool strict = false;
  std::string out;
  std::string data_file;

  json to_json() const {
    json j;
    j["case"] = case_id;
    j["n"] = n;
    j["m"] = m;
    j["n_test"] = n_test;
    j["d"] = d;
    j["seed"] = seed;
    j["hyper"] = {{"a", hyper.a}, {"b", hyper.b}, {"lambda1", hyper.lambda1}, {"lambda2", hyper.lambda2}};
    j["solver"] = {{"learning_rate", solver.learning_rate},
                   {"momentum", solver.momentum},
                   {"max_iter", solver.max_iter},
                   {"check_every", solver.check_every},
                   {"tol_constraints", solver.tol_constraints},
                   {"tol_gap", solver.tol_gap}};
    j["tuning"] = {{"folds", tuning.folds},
                   {"budget", tuning.budget},
                   {"log10_lo", std::isnan(tuning.log10_lo) ? json(nullptr) : json(tuning.log10_lo)},
                   {"log10_hi", std::isnan(tuning.log10_hi) ? json(nullptr) : json(tuning.log10_hi)},
                   {"enabled", tune}};
    j["metrics"] = {{"alpha", alpha},
                    {"n_x", metrics.n_x},
                    {"n_y", metrics.n_y},
                    {"mi_k", metrics.mi_k},
                    {"sqi_bins", metrics.sqi_bins}};
    j["theta_f"] = theta_f;
    j["jobs"] = jobs;
    j["strict"] = strict;
    j["out"] = out;
    j["data"] = data_file;
    return j;
  }
};

// raw option storage + CLI11 option handles, resolved after parsing
struct OptionSet {
  CLI::App* cmd = nullptr;
  std::string config_path;
  RunConfig raw;
  std::string theta_text, out_text, data_text;
  CLI::Option *o_case = nullptr, *o_n = nullptr, *o_m = nullptr, *o_ntest = nullptr, *o_d = nullptr,
              *o_seed = nullptr, *o_a = nullptr, *o_b = nullptr, *o_l1 = nullptr, *o_l2 = nullptr,
              *o_lr = nullptr, *o_mom = nullptr, *o_maxit = nullptr, *o_check = nullptr,
              *o_tol = nullptr, *o_tolc = nullptr, *o_tolg = nullptr, *o_folds = nullptr,
              *o_budget = nullptr, *o_blo = nullptr, *o_bhi = nullptr, *o_alpha = nullptr,
              *o_nx = nullptr, *o_ny = nullptr, *o_mik = nullptr, *o_bins = nullptr,
              *o_theta = nullptr, *o_tune = nullptr, *o_jobs = nullptr, *o_strict = nullptr,
              *o_out = nullptr, *o_data = nullptr;
  double tol_both = 1e-4;

  void attach(CLI::App* sub) {
    cmd = sub;
    sub->add_option("--config", config_path, "flat key=value config file");
    o_case = sub->add_option("--case", raw.case_id, "synthetic test case id (1-5)");
    o_n = sub->add_option("--n", raw.n, "pre-training sample size");
    o_m = sub->add_option("--m", raw.m, "calibration sample size");
    o_ntest = sub->add_option("--n-test", raw.n_test, "test sample size");
    o_d = sub->add_option("--d", raw.d, "input dimension");
    o_seed = sub->add_option("--seed", raw.seed, "root seed");
    o_a = sub->add_option("--a", raw.hyper.a, "mean-fit weight a");
    o_b = sub->add_option("--b", raw.hyper.b, "width weight b");
    o_l1 = sub->add_option("--lambda1", raw.hyper.lambda1, "nuclear-norm weight");
    o_l2 = sub->add_option("--lambda2", raw.hyper.lambda2, "Frobenius weight (> 0)");
    o_lr = sub->add_option("--learning-rate", raw.solver.learning_rate, "ascent step size");
    o_mom = sub->add_option("--momentum", raw.solver.momentum, "Nesterov momentum");
    o_maxit = sub->add_option("--max-iter", raw.solver.max_iter, "iteration cap");
    o_check = sub->add_option("--check-every", raw.solver.check_every, "convergence check cadence");
    o_tol = sub->add_option("--tol", tol_both, "sets both solver tolerances");
    o_tolc = sub->add_option("--tol-constraints", raw.solver.tol_constraints, "constraint tolerance");
    o_tolg = sub->add_option("--tol-gap", raw.solver.tol_gap, "duality-gap tolerance");
    o_folds = sub->add_option("--folds", raw.tuning.folds, "cross-validation folds (0 = auto)");
    o_budget = sub->add_option("--budget", raw.tuning.budget, "tuning evaluation budget");
    o_blo = sub->add_option("--log10-lo", raw.tuning.log10_lo, "tuning lower bound, log10");
    o_bhi = sub->add_option("--log10-hi", raw.tuning.log10_hi, "tuning upper bound, log10");
    o_alpha = sub->add_option("--alpha", raw.alpha, "miscoverage level");
    o_nx = sub->add_option("--n-x", raw.metrics.n_x, "local-coverage locations");
    o_ny = sub->add_option("--n-y", raw.metrics.n_y, "local-coverage draws per location");
    o_mik = sub->add_option("--mi-k", raw.metrics.mi_k, "MI estimator neighbor count");
    o_bins = sub->add_option("--sqi-bins", raw.metrics.sqi_bins, "R2_SQI quantile bins");
    o_theta = sub->add_option("--theta-f", theta_text, "scale-kernel lengthscales, comma separated");
    o_tune = sub->add_flag("--tune", raw.tune, "tune theta_f by HSIC cross-validation");
    o_jobs = sub->add_option("--jobs", raw.jobs, "worker threads (env KSOS_JOBS)");
    o_strict = sub->add_flag("--strict", raw.strict, "exit 2 when the solver does not converge");
    o_out = sub->add_option("--out", out_text, "output path or prefix");
    o_data = sub->add_option("--data", data_text, "input dataset CSV instead of simulation");
  }

  RunConfig resolve() const {
    ConfigMap cfg;
    if (!config_path.empty()) cfg = ConfigMap::from_file(config_path);
    RunConfig r;
    r.case_id = cli::resolve(o_case->count(), raw.case_id, cfg, "case", 1);
    r.n = cli::resolve(o_n->count(), raw.n, cfg, "n", 100);
    r.m = cli::resolve(o_m->count(), raw.m, cfg, "m", 200);
    r.n_test = cli::resolve(o_ntest->count(), raw.n_test, cfg, "n_test", 1000);
    r.d = cli::resolve(o_d->count(), raw.d, cfg, "d", 1);
    r.seed = cli::resolve(o_seed->count(), raw.seed, cfg, "seed", static_cast<uint64_t>(0));
    r.hyper.a = cli::resolve(o_a->count(), raw.hyper.a, cfg, "hyper.a", 0.0);
    r.hyper.b = cli::resolve(o_b->count(), raw.hyper.b, cfg, "hyper.b", 10.0);
    r.hyper.lambda1 = cli::resolve(o_l1->count(), raw.hyper.lambda1, cfg, "hyper.lambda1", 1.0);
    r.hyper.lambda2 = cli::resolve(o_l2->count(), raw.hyper.lambda2, cfg, "hyper.lambda2", 1.0);
    r.solver.learning_rate =
        cli::resolve(o_lr->count(), raw.solver.learning_rate, cfg, "solver.learning_rate", 1e-2);
    r.solver.momentum = cli::resolve(o_mom->count(), raw.solver.momentum, cfg, "solver.momentum", 0.9);
    r.solver.max_iter = cli::resolve(o_maxit->count(), raw.solver.max_iter, cfg, "solver.max_iter", 10000);
    r.solver.check_every =
        cli::resolve(o_check->count(), raw.solver.check_every, cfg, "solver.check_every", 50);
    const double tol = cli::resolve(o_tol->count(), tol_both, cfg, "solver.tol", 1e-4);
    r.solver.tol_constraints =
        cli::resolve(o_tolc->count(), raw.solver.tol_constraints, cfg, "solver.tol_constraints", tol);
    r.solver.tol_gap = cli::resolve(o_tolg->count(), raw.solver.tol_gap, cfg, "solver.tol_gap", tol);
    r.tuning.folds = cli::resolve(o_folds->count(), raw.tuning.folds, cfg, "tuning.folds", 0);
    r.tuning.budget = cli::resolve(o_budget->count(), raw.tuning.budget, cfg, "tuning.budget", 14);
    r.tuning.log10_lo =
        cli::resolve(o_blo->count(), raw.tuning.log10_lo, cfg, "tuning.log10_lo", std::nan(""));
    r.tuning.log10_hi =
        cli::resolve(o_bhi->count(), raw.tuning.log10_hi, cfg, "tuning.log10_hi", std::nan(""));
    r.tuning.seed = r.seed;
    r.alpha = cli::resolve(o_alpha->count(), raw.alpha, cfg, "metrics.alpha", 0.1);
    r.metrics.n_x = cli::resolve(o_nx->count(), raw.metrics.n_x, cfg, "metrics.n_x", 100);
    r.metrics.n_y = cli::resolve(o_ny->count(), raw.metrics.n_y, cfg, "metrics.n_y", 1000);
    r.metrics.mi_k = cli::resolve(o_mik->count(), raw.metrics.mi_k, cfg, "metrics.mi_k", 3);
    r.metrics.sqi_bins = cli::resolve(o_bins->count(), raw.metrics.sqi_bins, cfg, "metrics.sqi_bins", 50);
    const std::string theta_str =
        cli::resolve(o_theta->count(), theta_text, cfg, "theta_f", std::string());
    if (!theta_str.empty()) r.theta_f = parse_doubles(theta_str);
    r.tune = o_tune->count() > 0 ? raw.tune : cfg.get<int>("tuning.enabled", 0) != 0;
    int jobs_default = 1;
    if (const char* env = std::getenv("KSOS_JOBS")) jobs_default = std::max(1, std::atoi(env));
    r.jobs = cli::resolve(o_jobs->count(), raw.jobs, cfg, "jobs", jobs_default);
    r.tuning.jobs = r.jobs;
    r.strict = o_strict->count() > 0 ? raw.strict : cfg.get<int>("strict", 0) != 0;
    r.out = cli::resolve(o_out->count(), out_text, cfg, "out", std::string());
    r.data_file = cli::resolve(o_data->count(), data_text, cfg, "data", std::string());
    r.metrics.seed = cli::split_seed(r.seed, 900);
    return r;
  }
};

// benchmark-scale fallbacks when theta_f is neither given nor tuned
double default_theta_f(int case_id) {
  switch (case_id) {
    case 1: return 0.4;
    case 2: return 1.2;
    case 3: return 0.9;
    case 4: return 1.6;
    default: return 0.7;
  }
}

struct DatasetHandle {
  ksos_dataset* ptr = nullptr;
  ~DatasetHandle() { ksos_dataset_free(ptr); }
};

void write_dataset_csv(const std::string& path, ksos_dataset* data) {
  const int n = ksos_dataset_rows(data);
  const int d = ksos_dataset_cols(data);
  std::vector<double> x(static_cast<std::size_t>(n) * d), y(n);
  ok(ksos_dataset_copy_x(data, x.data()), "copy x");
  ok(ksos_dataset_copy_y(data, y.data()), "copy y");
  std::ofstream out(path);
  if (!out.good()) throw std::runtime_error("cannot write " + path);
  for (int j = 0; j < d; ++j) out << "x_" << (j + 1) << ",";
  out << "y\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out << fmt(x[static_cast<std::size_t>(i) * d + j]) << ",";
    out << fmt(y[i]) << "\n";
  }
}

ksos_dataset* load_dataset_csv(const std::string& path) {
  const cli::Csv csv = cli::read_csv(path);
  const int cols = static_cast<int>(csv.header.size());
  if (cols < 2) throw std::runtime_error(path + ": need x_1..x_d and y columns");
  const int d = cols - 1;
  const int n = static_cast<int>(csv.rows.size());
  std::vector<double> x(static_cast<std::size_t>(n) * d), y(n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(csv.rows[i].size()) != cols)
      throw std::runtime_error(path + ": ragged row " + std::to_string(i + 2));
    for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(i) * d + j] = csv.rows[i][j];
    y[i] = csv.rows[i].back();
  }
  ksos_dataset* out = nullptr;
  ok(ksos_dataset_create(n, d, x.data(), y.data(), &out), "dataset from " + path);
  return out;
}

ksos_dataset* dataset_for(const RunConfig& r, int size, uint64_t seed) {
  ksos_dataset* out = nullptr;
  if (!r.data_file.empty()) return load_dataset_csv(r.data_file);
  ok(ksos_dataset_generate(r.case_id, size, r.d, seed, &out), "generate case data");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out.good()) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

std::vector<double> tuned_or_default_theta(const RunConfig& r, ksos_dataset* pretrain, ksos_gp* gp,
                                           json* tune_meta) {
  if (!r.theta_f.empty()) return r.theta_f;
  const int d = ksos_dataset_cols(pretrain);
  if (!r.tune) return std::vector<double>(d, default_theta_f(r.case_id));
  ksos_tune_result* result = nullptr;
  ok(ksos_tune_lengthscale(pretrain, gp, &r.hyper, &r.tuning, &r.solver, &result), "tune theta_f");
  std::vector<double> theta(d);
  ok(ksos_tune_best(result, theta.data()), "tune best");
  if (tune_meta) {
    (*tune_meta)["evaluations"] = ksos_tune_curve_size(result);
    (*tune_meta)["theta_f"] = theta;
  }
  ksos_tune_result_free(result);
  return theta;
}

json diagnostics_json(const ksos_solve_diagnostics& diag) {
  return json{{"iterations", diag.iterations},     {"converged", diag.converged != 0},
              {"final_gap", diag.final_gap},       {"max_violation", diag.max_violation},
              {"dual_objective", diag.dual_objective}, {"solve_seconds", diag.solve_seconds}};
}

void write_band_csv(const std::string& path, ksos_band* band, ksos_dataset* test) {
  const int n = ksos_dataset_rows(test);
  const int d = ksos_dataset_cols(test);
  std::vector<double> x(static_cast<std::size_t>(n) * d);
  ok(ksos_dataset_copy_x(test, x.data()), "copy x");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int bb) {
    return x[static_cast<std::size_t>(a) * d] < x[static_cast<std::size_t>(bb) * d];
  });
  std::ofstream out(path);
  if (!out.good()) throw std::runtime_error("cannot write " + path);
  for (int j = 0; j < d; ++j) out << "x_" << (j + 1) << ",";
  out << "mean,lo,hi\n";
  for (int idx : order) {
    const double* xi = &x[static_cast<std::size_t>(idx) * d];
    double mean = 0, lo = 0, hi = 0;
    ok(ksos_band_predict(band, xi, d, &mean, nullptr), "band predict");
    ok(ksos_band_interval(band, xi, d, &lo, &hi), "band interval");
    for (int j = 0; j < d; ++j) out << fmt(xi[j]) << ",";
    out << fmt(mean) << "," << fmt(lo) << "," << fmt(hi) << "\n";
  }
}

/* ---- subcommand bodies --------------------------------------------------- */

int cmd_simulate(const RunConfig& r) {
  DatasetHandle data;
  data.ptr = dataset_for(r, r.n, r.seed);
  const std::string prefix = r.out.empty() ? "dataset" : r.out;
  write_dataset_csv(prefix + ".csv", data.ptr);
  json meta = {{"case", r.case_id}, {"n", r.n}, {"d", r.d}, {"seed", r.seed}};
  write_text(prefix + ".meta.json", meta.dump(2));
  std::cout << prefix << ".csv\n";
  return kExitOk;
}

int cmd_tune(const RunConfig& r) {
  DatasetHandle pretrain;
  pretrain.ptr = dataset_for(r, r.n, r.seed);
  ksos_gp* gp = nullptr;
  ok(ksos_gp_fit(pretrain.ptr, &gp), "gp fit");
  ksos_tune_result* result = nullptr;
  const ksos_status st = ksos_tune_lengthscale(pretrain.ptr, gp, &r.hyper, &r.tuning, &r.solver,
                                               &result);
  ksos_gp_free(gp);
  ok(st, "tune theta_f");

  const int d = ksos_dataset_cols(pretrain.ptr);
  const std::string prefix = r.out.empty() ? "tune" : r.out;
  std::ofstream curve(prefix + "_curve.csv");
  if (!curve.good()) throw std::runtime_error("cannot write " + prefix + "_curve.csv");
  for (int j = 0; j < d; ++j) curve << "theta_" << (j + 1) << ",";
  curve << "hsic,ci_lo,ci_hi\n";
  std::vector<double> theta(d);
  for (int i = 0; i < ksos_tune_curve_size(result); ++i) {
    double hsic = 0, lo = 0, hi = 0;
    ok(ksos_tune_curve_point(result, i, theta.data(), &hsic, &lo, &hi), "curve point");
    for (int j = 0; j < d; ++j) curve << fmt(theta[j]) << ",";
    curve << fmt(hsic) << "," << fmt(lo) << "," << fmt(hi) << "\n";
  }
  ok(ksos_tune_best(result, theta.data()), "tune best");
  ksos_tune_result_free(result);
  json best = {{"theta_f", theta}};
  write_text(prefix + "_theta.json", best.dump(2));
  std::cout << best.dump() << "\n";
  return kExitOk;
}

int cmd_fit(const RunConfig& r) {
  DatasetHandle pretrain;
  pretrain.ptr = dataset_for(r, r.n, r.seed);
  const int d = ksos_dataset_cols(pretrain.ptr);
  ksos_gp* gp = nullptr;
  ok(ksos_gp_fit(pretrain.ptr, &gp), "gp fit");
  json tune_meta;
  const std::vector<double> theta = tuned_or_default_theta(r, pretrain.ptr, gp, &tune_meta);
  if (static_cast<int>(theta.size()) != d)
    throw std::runtime_error("--theta-f needs " + std::to_string(d) + " values");

  ksos_problem* prob = nullptr;
  ok(ksos_problem_create(pretrain.ptr, gp, theta.data(), &r.hyper, &prob), "problem create");
  ksos_model* model = nullptr;
  ksos_solve_diagnostics diag{};
  ok(ksos_solve(prob, &r.solver, &model, &diag), "solve dual");
  ksos_problem_free(prob);
  ksos_gp_free(gp);

  const std::string path = r.out.empty() ? "model.json" : r.out;
  ok(ksos_model_save(model, path.c_str()), "save model");
  ksos_model_free(model);

  json report = diagnostics_json(diag);
  report["theta_f"] = theta;
  report["model"] = path;
  if (!tune_meta.is_null()) report["tuning"] = tune_meta;
  std::cout << report.dump(2) << "\n";
  if (r.strict && diag.converged == 0) return kExitCheckFailed;
  return kExitOk;
}

int cmd_calibrate(const RunConfig& r, const std::string& model_path) {
  ksos_model* model = nullptr;
  ok(ksos_model_load(model_path.c_str(), &model), "load model");
  DatasetHandle calib;
  calib.ptr = dataset_for(r, r.m, r.seed);
  ksos_band* band = nullptr;
  ok(ksos_calibrate(model, calib.ptr, r.alpha, &band), "calibrate");
  ksos_model_free(model);
  const std::string path = r.out.empty() ? "band.json" : r.out;
  ok(ksos_band_save(band, path.c_str()), "save band");
  double q_hat = 0;
  int m = 0;
  ok(ksos_band_info(band, &q_hat, nullptr, &m), "band info");
  ksos_band_free(band);
  json info = {{"q_hat", std::isinf(q_hat) ? json("inf") : json(q_hat)},
               {"alpha", r.alpha},
               {"calib_size", m},
               {"band", path}};
  std::cout << info.dump(2) << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& r, const std::string& band_path) {
  ksos_band* band = nullptr;
  ok(ksos_band_load(band_path.c_str(), &band), "load band");
  DatasetHandle test;
  test.ptr = dataset_for(r, r.n_test, r.seed);
  char* report = nullptr;
  ok(ksos_evaluate_report(band, test.ptr, r.case_id, &r.metrics, &report), "evaluate");
  const std::string prefix = r.out.empty() ? "evaluate" : r.out;
  write_text(prefix + "_metrics.json", report);
  std::cout << report << "\n";
  ksos_string_free(report);
  write_band_csv(prefix + "_band.csv", band, test.ptr);
  ksos_band_free(band);
  return kExitOk;
}

struct PipelineResult {
  json meta;
  bool converged = true;
};

// Algorithm steps shared by `pipeline` and each bench job: GP pre-fit,
// theta_f selection, dual solve, split-conformal calibration, metrics for
// the kSoS band and the constant-width GP baseline.
PipelineResult run_pipeline(const RunConfig& r, const std::string& out_dir) {
  const bool persist = !out_dir.empty();
  if (persist) std::filesystem::create_directories(out_dir);
  auto path = [&](const std::string& name) { return out_dir + "/" + name; };

  DatasetHandle pretrain, calib, test;
  pretrain.ptr = dataset_for(r, r.n, cli::split_seed(r.seed, 0));
  calib.ptr = dataset_for(r, r.m, cli::split_seed(r.seed, 1));
  test.ptr = dataset_for(r, r.n_test, cli::split_seed(r.seed, 2));
  const int d = ksos_dataset_cols(pretrain.ptr);

  ksos_gp* gp = nullptr;
  ok(ksos_gp_fit(pretrain.ptr, &gp), "gp fit");
  std::vector<double> theta_m(d);
  double gp_var = 0, gp_nugget = 0, gp_lml = 0, s = 0;
  ok(ksos_gp_info(gp, theta_m.data(), &gp_var, &gp_nugget, &gp_lml, &s), "gp info");

  json tune_meta;
  const std::vector<double> theta = tuned_or_default_theta(r, pretrain.ptr, gp, &tune_meta);

  ksos_problem* prob = nullptr;
  ok(ksos_problem_create(pretrain.ptr, gp, theta.data(), &r.hyper, &prob), "problem create");
  ksos_model* model = nullptr;
  ksos_solve_diagnostics diag{};
  ok(ksos_solve(prob, &r.solver, &model, &diag), "solve dual");
  ksos_problem_free(prob);

  ksos_band* band = nullptr;
  ok(ksos_calibrate(model, calib.ptr, r.alpha, &band), "calibrate");
  ksos_band* baseline = nullptr;
  ok(ksos_gp_baseline_band(gp, calib.ptr, r.alpha, &baseline), "baseline band");
  ksos_gp_free(gp);

  char* ksos_report = nullptr;
  ok(ksos_evaluate_report(band, test.ptr, r.case_id, &r.metrics, &ksos_report), "evaluate ksos");
  char* base_report = nullptr;
  ok(ksos_evaluate_report(baseline, test.ptr, r.case_id, &r.metrics, &base_report),
     "evaluate baseline");

  PipelineResult result;
  result.converged = diag.converged != 0;
  result.meta["config"] = r.to_json();
  result.meta["gp"] = {{"lengthscales", theta_m},
                       {"variance", gp_var},
                       {"nugget", gp_nugget},
                       {"log_marginal_likelihood", gp_lml},
                       {"s", s}};
  result.meta["theta_f"] = theta;
  if (!tune_meta.is_null()) result.meta["tuning"] = tune_meta;
  result.meta["diagnostics"] = diagnostics_json(diag);
  result.meta["metrics"] = {{"ksos", json::parse(ksos_report)},
                            {"gp_baseline", json::parse(base_report)}};

  if (persist) {
    ok(ksos_model_save(model, path("model.json").c_str()), "save model");
    ok(ksos_band_save(band, path("band.json").c_str()), "save band");
    ok(ksos_band_save(baseline, path("baseline_band.json").c_str()), "save baseline band");
    write_band_csv(path("band.csv"), band, test.ptr);
    write_text(path("metrics.json"), result.meta["metrics"].dump(2));
    write_text(path("meta.json"), result.meta.dump(2));
  }
  ksos_string_free(ksos_report);
  ksos_string_free(base_report);
  ksos_band_free(band);
  ksos_band_free(baseline);
  ksos_model_free(model);
  return result;
}

int cmd_pipeline(const RunConfig& r) {
  const std::string dir = r.out.empty()
                              ? "run_case" + std::to_string(r.case_id) + "_seed" + std::to_string(r.seed)
                              : r.out;
  const PipelineResult result = run_pipeline(r, dir);
  std::cout << result.meta["diagnostics"].dump(2) << "\n" << dir << "\n";
  if (r.strict && !result.converged) return kExitCheckFailed;
  return kExitOk;
}

int cmd_bench(const RunConfig& r, const std::string& cases_text, const std::string& seeds_text) {
  const std::vector<int> cases = parse_int_list(cases_text.empty() ? "1,2,3,4" : cases_text);
  const std::vector<int> seeds = parse_int_list(seeds_text.empty() ? "0-19" : seeds_text);

  struct Row {
    int case_id, seed;
    std::string method, status;
    json report;  // metrics or null
    json diag;
    std::string theta;
  };
  std::vector<Row> rows(cases.size() * seeds.size() * 2);

  std::atomic<std::size_t> next{0};
  const std::size_t total = cases.size() * seeds.size();
  auto worker = [&] {
    for (std::size_t job = next.fetch_add(1); job < total; job = next.fetch_add(1)) {
      const int case_id = cases[job / seeds.size()];
      const int seed = seeds[job % seeds.size()];
      RunConfig local = r;
      local.case_id = case_id;
      local.seed = static_cast<uint64_t>(seed);
      local.tuning.seed = local.seed;
      local.metrics.seed = cli::split_seed(local.seed, 900);
      local.tuning.jobs = 1;  // parallelism lives at the job level here
      Row ksos_row{case_id, seed, "ksos", "ok", json(), json(), ""};
      Row gp_row{case_id, seed, "gp", "ok", json(), json(), ""};
      try {
        const PipelineResult res = run_pipeline(local, "");
        ksos_row.report = res.meta["metrics"]["ksos"];
        gp_row.report = res.meta["metrics"]["gp_baseline"];
        ksos_row.diag = res.meta["diagnostics"];
        ksos_row.theta = json(res.meta["theta_f"]).dump();
        if (!res.converged) ksos_row.status = "not_converged";
      } catch (const std::exception& err) {
        std::string msg = err.what();
        for (char& c : msg)
          if (c == ',' || c == '\n') c = ';';
        ksos_row.status = "error:" + msg;
        gp_row.status = ksos_row.status;
      }
      rows[2 * job] = std::move(ksos_row);
      rows[2 * job + 1] = std::move(gp_row);
    }
  };
  std::vector<std::thread> pool;
  const int workers = std::max(1, std::min<int>(r.jobs, static_cast<int>(total)));
  for (int w = 0; w < workers - 1; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  const std::string path = r.out.empty() ? "bench.csv" : r.out;
  std::ofstream out(path);
  if (!out.good()) throw std::runtime_error("cannot write " + path);
  out << "case,seed,method,status,theta_f,mean_width,mutual_information,r2_sqi,"
         "marginal_coverage,mean_local_coverage,solve_seconds,iterations,final_gap,max_violation\n";
  auto field = [](const json& j, const char* key) -> std::string {
    if (j.is_null() || !j.contains(key) || j[key].is_null()) return "";
    const auto& v = j[key];
    return v.is_string() ? v.get<std::string>() : fmt(v.get<double>());
  };
  for (const Row& row : rows) {
    out << row.case_id << "," << row.seed << "," << row.method << "," << row.status << ",\""
        << row.theta << "\"," << field(row.report, "mean_width") << ","
        << field(row.report, "mutual_information") << "," << field(row.report, "r2_sqi") << ","
        << field(row.report, "marginal_coverage") << ","
        << field(row.report, "mean_local_coverage") << "," << field(row.diag, "solve_seconds")
        << "," << field(row.diag, "iterations") << "," << field(row.diag, "final_gap") << ","
        << field(row.diag, "max_violation") << "\n";
  }
  std::cout << path << "\n";
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& r, int points, double tol) {
  DatasetHandle data;
  data.ptr = dataset_for(r, r.n, r.seed);
  const int d = ksos_dataset_cols(data.ptr);
  const std::vector<double> theta_m(d, 0.5), theta_f(d, 0.4);
  ksos_problem* prob = nullptr;
  ok(ksos_problem_create_explicit(data.ptr, &r.hyper, 1.0, theta_m.data(), 1.0, theta_f.data(),
                                  1.0, &prob),
     "problem create");
  double err = 0;
  const ksos_status st = ksos_gradient_check(prob, points, r.seed, &err);
  ksos_problem_free(prob);
  ok(st, "gradient check");
  std::cout << "max relative error: " << fmt(err) << " over " << points << " points (n=" << r.n
            << ")\n";
  return err <= tol ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive conformal prediction bands via kernel sum-of-squares"};
  app.require_subcommand(1);

  OptionSet sim, tune, fit, cal, eva, pipe, bench, grad, pconf;
  std::string model_path, band_path, cases_text, seeds_text;
  int grad_points = 50;
  double grad_tol = 1e-5;

  sim.attach(app.add_subcommand("simulate", "write a synthetic dataset CSV plus meta JSON"));
  tune.attach(app.add_subcommand("tune", "HSIC cross-validated lengthscale selection"));
  fit.attach(app.add_subcommand("fit", "GP pre-fit plus dual solve; persists the model artifact"));
  cal.attach(app.add_subcommand("calibrate", "attach the adjusted conformal quantile to a model"));
  cal.cmd->add_option("--model", model_path, "model artifact path")->required();
  eva.attach(app.add_subcommand("evaluate", "metrics report JSON plus band CSV"));
  eva.cmd->add_option("--band", band_path, "calibrated band artifact path")->required();
  pipe.attach(app.add_subcommand("pipeline", "simulate, fit, tune, calibrate, evaluate on one seed"));
  bench.attach(app.add_subcommand("bench", "repeat the pipeline over seeds and cases"));
  bench.cmd->add_option("--cases", cases_text, "case list, e.g. 1,2,3,4");
  bench.cmd->add_option("--seeds", seeds_text, "seed list or range, e.g. 0-19");
  grad.attach(app.add_subcommand("gradcheck", "finite-difference check of the dual gradient"));
  grad.cmd->add_option("--points", grad_points, "number of random multiplier points");
  grad.cmd->add_option("--grad-tol", grad_tol, "pass threshold on the max relative error");
  pconf.attach(app.add_subcommand("print-config", "print the resolved configuration as JSON"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim.cmd->parsed()) return cmd_simulate(sim.resolve());
    if (tune.cmd->parsed()) return cmd_tune(tune.resolve());
    if (fit.cmd->parsed()) return cmd_fit(fit.resolve());
    if (cal.cmd->parsed()) return cmd_calibrate(cal.resolve(), model_path);
    if (eva.cmd->parsed()) return cmd_evaluate(eva.resolve(), band_path);
    if (pipe.cmd->parsed()) return cmd_pipeline(pipe.resolve());
    if (bench.cmd->parsed()) return cmd_bench(bench.resolve(), cases_text, seeds_text);
    if (grad.cmd->parsed()) return cmd_gradcheck(grad.resolve(), grad_points, grad_tol);
    if (pconf.cmd->parsed()) {
      std::cout << pconf.resolve().to_json().dump(2) << "\n";
      return kExitOk;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
