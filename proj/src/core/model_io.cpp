#include "core/model_io.hpp"

#include <fstream>

#include <json.hpp>

#include "core/linalg.hpp"

namespace ksos {

namespace {

using nlohmann::json;

json vec_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vec_from_json(const json& j) {
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json mat_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i)));
  return rows;
}

Matrix mat_from_json(const json& j) {
  const auto rows = j.size();
  require(rows > 0, ErrorCode::io_error, "artifact: empty matrix");
  const auto cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    require(j[i].size() == cols, ErrorCode::io_error, "artifact: ragged matrix");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

json lower_triangle_to_json(const Matrix& a) {
  json out = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out.push_back(a(i, j));
  return out;
}

Matrix lower_triangle_from_json(const json& j, Eigen::Index n) {
  require(j.size() == static_cast<std::size_t>(n * (n + 1) / 2), ErrorCode::io_error,
          "artifact: wrong triangle length");
  Matrix a(n, n);
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index jj = 0; jj <= i; ++jj) {
      const double v = j[idx++].get<double>();
      a(i, jj) = v;
      a(jj, i) = v;
    }
  }
  return a;
}

json kernel_to_json(const KernelSpec& spec) {
  return json{{"lengthscales", vec_to_json(spec.lengthscales)}, {"variance", spec.variance}};
}

KernelSpec kernel_from_json(const json& j) {
  KernelSpec spec;
  spec.lengthscales = vec_from_json(j.at("lengthscales"));
  spec.variance = j.at("variance").get<double>();
  return spec;
}

json model_to_json(const KsosModel& model) {
  json j;
  j["format"] = "ksos-model";
  j["version"] = 1;
  j["train_x"] = mat_to_json(model.train_x);
  j["train_y"] = vec_to_json(model.train_y);
  j["kernel_m"] = kernel_to_json(model.kernel_m);
  j["kernel_f"] = kernel_to_json(model.kernel_f);
  j["hyper"] = json{{"a", model.hyper.a},
                    {"b", model.hyper.b},
                    {"lambda1", model.hyper.lambda1},
                    {"lambda2", model.hyper.lambda2}};
  j["s"] = model.s;
  j["jitter_f"] = model.fact_f.jitter;
  j["gamma_hat"] = vec_to_json(model.gamma_hat);
  j["a_hat_lower"] = lower_triangle_to_json(model.a_hat);
  j["mean_train_scale"] = model.mean_train_scale;
  j["diagnostics"] = json{{"iterations", model.diagnostics.iterations},
                          {"converged", model.diagnostics.converged},
                          {"final_gap", model.diagnostics.final_gap},
                          {"max_violation", model.diagnostics.max_violation},
                          {"dual_objective", model.diagnostics.dual_objective}};
  return j;
}

KsosModel model_from_json(const json& j) {
  require(j.at("format") == "ksos-model", ErrorCode::io_error, "artifact: not a model file");
  KsosModel model;
  model.train_x = mat_from_json(j.at("train_x"));
  model.train_y = vec_from_json(j.at("train_y"));
  model.kernel_m = kernel_from_json(j.at("kernel_m"));
  model.kernel_f = kernel_from_json(j.at("kernel_f"));
  const json& h = j.at("hyper");
  model.hyper = HyperParams{h.at("a").get<double>(), h.at("b").get<double>(),
                            h.at("lambda1").get<double>(), h.at("lambda2").get<double>()};
  model.s = j.at("s").get<double>();
  model.gamma_hat = vec_from_json(j.at("gamma_hat"));
  const auto n = model.train_x.rows();
  model.a_hat = lower_triangle_from_json(j.at("a_hat_lower"), n);
  model.mean_train_scale = j.at("mean_train_scale").get<double>();
  const json& d = j.at("diagnostics");
  model.diagnostics.iterations = d.at("iterations").get<int>();
  model.diagnostics.converged = d.at("converged").get<bool>();
  model.diagnostics.final_gap = d.at("final_gap").get<double>();
  model.diagnostics.max_violation = d.at("max_violation").get<double>();
  model.diagnostics.dual_objective = d.at("dual_objective").get<double>();

  model.fact_f = cholesky_upper_with_jitter(
      gram_matrix(model.train_x, model.train_x, model.kernel_f), j.at("jitter_f").get<double>());

  // rebuild the evaluation factor from the PSD part of A
  const Eigh es = eigh(model.a_hat);
  Eigen::Index first = es.eigenvalues.size();
  while (first > 0 && es.eigenvalues(first - 1) > 0.0) --first;
  const auto k = es.eigenvalues.size() - first;
  model.a_hat_factor = es.eigenvectors.rightCols(k) *
                       es.eigenvalues.tail(k).cwiseSqrt().asDiagonal();
  return model;
}

json gp_to_json(const GpModel& gp) {
  json j;
  j["kernel"] = kernel_to_json(gp.kernel);
  j["nugget"] = gp.nugget;
  j["alpha"] = vec_to_json(gp.alpha);
  j["train_x"] = mat_to_json(gp.train_x);
  j["log_marginal_likelihood"] = gp.log_marginal_likelihood;
  j["rkhs_norm_sq"] = gp.rkhs_norm_sq_cached;
  return j;
}

GpModel gp_from_json(const json& j) {
  GpModel gp;
  gp.kernel = kernel_from_json(j.at("kernel"));
  gp.nugget = j.at("nugget").get<double>();
  gp.alpha = vec_from_json(j.at("alpha"));
  gp.train_x = mat_from_json(j.at("train_x"));
  gp.log_marginal_likelihood = j.at("log_marginal_likelihood").get<double>();
  gp.rkhs_norm_sq_cached = j.at("rkhs_norm_sq").get<double>();
  return gp;
}

json read_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& err) {
    throw Error(ErrorCode::io_error, "malformed JSON in " + path + ": " + err.what());
  }
  return j;
}

void write_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot write " + path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::io_error, "write failed for " + path);
}

}  // namespace

void save_model(const KsosModel& model, const std::string& path) {
  write_file(model_to_json(model), path);
}

KsosModel load_model(const std::string& path) {
  try {
    return model_from_json(read_file(path));
  } catch (const json::exception& err) {
    throw Error(ErrorCode::io_error, "malformed model artifact " + path + ": " + err.what());
  }
}

void save_band(const CalibratedModel& cal, const std::string& path) {
  json j;
  j["format"] = "ksos-band";
  j["version"] = 1;
  if (const auto* ksos_base = dynamic_cast<const KsosModel*>(cal.base.get())) {
    j["base"] = model_to_json(*ksos_base);
    j["base"]["type"] = "ksos";
  } else if (const auto* gp_base = dynamic_cast<const GpConstantPredictor*>(cal.base.get())) {
    j["base"] = gp_to_json(gp_base->model());
    j["base"]["type"] = "gp_constant";
  } else {
    throw Error(ErrorCode::unsupported, "save_band: unknown predictor type");
  }
  j["q_hat"] = std::isinf(cal.q_hat) ? json("inf") : json(cal.q_hat);
  j["alpha_level"] = cal.alpha_level;
  j["calib_size"] = cal.calib_size;
  write_file(j, path);
}

CalibratedModel load_band(const std::string& path) {
  try {
    const json j = read_file(path);
    require(j.at("format") == "ksos-band", ErrorCode::io_error, "artifact: not a band file");
    CalibratedModel cal;
    const json& base = j.at("base");
    const std::string type = base.at("type").get<std::string>();
    if (type == "ksos") {
      cal.base = std::make_shared<KsosModel>(model_from_json(base));
    } else if (type == "gp_constant") {
      cal.base = std::make_shared<GpConstantPredictor>(gp_from_json(base));
    } else {
      throw Error(ErrorCode::io_error, "artifact: unknown base type " + type);
    }
    cal.q_hat = j.at("q_hat").is_string() ? std::numeric_limits<double>::infinity()
                                          : j.at("q_hat").get<double>();
    cal.alpha_level = j.at("alpha_level").get<double>();
    cal.calib_size = j.at("calib_size").get<int>();
    return cal;
  } catch (const json::exception& err) {
    throw Error(ErrorCode::io_error, "malformed band artifact " + path + ": " + err.what());
  }
}

std::string metrics_report_json(const MetricsReport& report) {
  json j;
  j["mean_width"] = std::isinf(report.mean_width) ? json("inf") : json(report.mean_width);
  j["mutual_information"] = report.mutual_information;
  if (report.r2_valid)
    j["r2_sqi"] = std::isinf(report.r2_sqi) ? json("-inf") : json(report.r2_sqi);
  else
    j["r2_sqi"] = nullptr;
  j["local_coverage_samples"] = vec_to_json(report.local_coverage_samples);
  j["mean_local_coverage"] =
      report.local_coverage_samples.size() ? report.local_coverage_samples.mean() : 0.0;
  j["marginal_coverage"] = report.marginal_coverage;
  j["timings"] = report.timings;
  return j.dump(2);
}

}  // namespace ksos
