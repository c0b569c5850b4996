#include "core/kernel.hpp"

#include <cmath>

namespace ksos {

void KernelSpec::validate() const {
  require(lengthscales.size() > 0, ErrorCode::invalid_argument, "kernel: no lengthscales");
  for (Eigen::Index l = 0; l < lengthscales.size(); ++l) {
    require(std::isfinite(lengthscales(l)) && lengthscales(l) > 0.0, ErrorCode::invalid_argument,
            "kernel: lengthscales must be strictly positive and finite");
  }
  require(std::isfinite(variance) && variance > 0.0, ErrorCode::invalid_argument,
          "kernel: variance must be strictly positive and finite");
}

double KernelSpec::operator()(const Vector& x, const Vector& y) const {
  double q = 0.0;
  for (Eigen::Index l = 0; l < lengthscales.size(); ++l) {
    const double z = (x(l) - y(l)) / lengthscales(l);
    q += z * z;
  }
  return variance * std::exp(-0.5 * q);
}

KernelSpec isotropic_kernel(double lengthscale, int d, double variance) {
  KernelSpec spec;
  spec.lengthscales = Vector::Constant(d, lengthscale);
  spec.variance = variance;
  return spec;
}

Matrix gram_matrix(const Matrix& points_a, const Matrix& points_b, const KernelSpec& spec) {
  spec.validate();
  require(points_a.cols() == spec.dim() && points_b.cols() == spec.dim(),
          ErrorCode::dimension_mismatch, "gram_matrix: column count must equal lengthscale count");
  const auto p = points_a.rows();
  const auto q = points_b.rows();
  const auto d = points_a.cols();
  Matrix out(p, q);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      double acc = 0.0;
      for (Eigen::Index l = 0; l < d; ++l) {
        const double z = (points_a(i, l) - points_b(j, l)) / spec.lengthscales(l);
        acc += z * z;
      }
      out(i, j) = spec.variance * std::exp(-0.5 * acc);
    }
  }
  return out;
}

namespace {

bool try_factor(const Matrix& k, double jitter, Matrix& v_out) {
  Matrix shifted = k;
  if (jitter > 0.0) shifted.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  v_out = llt.matrixU();
  // LLT can "succeed" on semi-definite inputs with zero pivots
  if ((v_out.diagonal().array() <= 0.0).any()) return false;
  return true;
}

}  // namespace

GramFactorization cholesky_upper(const Matrix& k) {
  require(k.rows() == k.cols(), ErrorCode::dimension_mismatch, "cholesky_upper: square input required");
  require(k.allFinite(), ErrorCode::invalid_argument, "cholesky_upper: non-finite input");
  GramFactorization fact;
  fact.gram = k;
  const double mean_diag = std::max(k.diagonal().mean(), std::numeric_limits<double>::min());
  const double cap = 1e-4 * mean_diag;
  double jitter = 0.0;
  for (;;) {
    if (try_factor(k, jitter, fact.chol_upper)) {
      fact.jitter = jitter;
      return fact;
    }
    if (jitter >= cap) break;
    jitter = (jitter == 0.0) ? 1e-12 * mean_diag : std::min(jitter * 10.0, cap);
  }
  throw Error(ErrorCode::not_positive_definite,
              "cholesky_upper: not positive definite at jitter cap (degenerate or duplicated inputs)");
}

GramFactorization cholesky_upper_with_jitter(const Matrix& k, double jitter) {
  GramFactorization fact;
  fact.gram = k;
  require(try_factor(k, jitter, fact.chol_upper), ErrorCode::not_positive_definite,
          "cholesky_upper_with_jitter: factorization failed at the stored jitter");
  fact.jitter = jitter;
  return fact;
}

Vector feature_map(const GramFactorization& fact, const Vector& k_x) {
  require(k_x.size() == fact.chol_upper.rows(), ErrorCode::dimension_mismatch,
          "feature_map: k_x length must match factor order");
  return fact.chol_upper.transpose().triangularView<Eigen::Lower>().solve(k_x);
}

Matrix feature_map_columns(const GramFactorization& fact, const Matrix& k_cols) {
  require(k_cols.rows() == fact.chol_upper.rows(), ErrorCode::dimension_mismatch,
          "feature_map_columns: row count must match factor order");
  return fact.chol_upper.transpose().triangularView<Eigen::Lower>().solve(k_cols);
}

}  // namespace ksos
