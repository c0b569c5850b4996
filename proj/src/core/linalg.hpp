#pragma once

#include "core/types.hpp"

namespace ksos {

// Eigendecomposition S = U diag(w) U^T of a symmetric matrix,
// eigenvalues ascending.
struct Eigh {
  Vector eigenvalues;
  Matrix eigenvectors;
};

Eigh eigh(const Matrix& s);

// Spectral truncation to the non-negative eigenspace: U max(0, D) U^T.
Matrix positive_part(const Matrix& s);

struct PsdNorms {
  double nuclear = 0;        // trace for a PSD matrix
  double frobenius_sq = 0;
};

PsdNorms psd_norms(const Matrix& a);

inline Matrix symmetrized(const Matrix& s) { return 0.5 * (s + s.transpose()); }

// max_i sum_j |S_ij|; upper bound on the spectral radius (Gershgorin)
double abs_row_sum_bound(const Matrix& s);

}  // namespace ksos
