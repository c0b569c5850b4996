#pragma once

#include "core/types.hpp"

namespace ksos {

// Squared-exponential kernel with per-dimension (ARD) lengthscales:
//   k(x, y) = variance * exp(-1/2 sum_l ((x_l - y_l) / lengthscale_l)^2)
struct KernelSpec {
  Vector lengthscales;
  double variance = 1.0;

  int dim() const { return static_cast<int>(lengthscales.size()); }
  void validate() const;
  double operator()(const Vector& x, const Vector& y) const;
};

KernelSpec isotropic_kernel(double lengthscale, int d, double variance = 1.0);

Matrix gram_matrix(const Matrix& points_a, const Matrix& points_b, const KernelSpec& spec);

// K + jitter*I = V^T V with V upper triangular. `gram` keeps the unjittered
// input matrix.
struct GramFactorization {
  Matrix gram;
  Matrix chol_upper;
  double jitter = 0.0;
};

// Jitter escalates geometrically from 1e-12 * mean(diag) by factors of 10 up
// to 1e-4 * mean(diag); past the cap the input is treated as degenerate.
GramFactorization cholesky_upper(const Matrix& k);
GramFactorization cholesky_upper_with_jitter(const Matrix& k, double jitter);

// Empirical feature map Phi(x) solving V^T Phi = k_x (triangular solve).
Vector feature_map(const GramFactorization& fact, const Vector& k_x);

// Column j of the result is feature_map(fact, k_cols.col(j)).
Matrix feature_map_columns(const GramFactorization& fact, const Matrix& k_cols);

}  // namespace ksos
