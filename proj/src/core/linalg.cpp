#include "core/linalg.hpp"

#ifdef KSOS_HAVE_LAPACKE
#include <lapacke.h>
#endif

namespace ksos {

Eigh eigh(const Matrix& s) {
  require(s.rows() == s.cols(), ErrorCode::dimension_mismatch, "eigh: matrix must be square");
  require(s.allFinite(), ErrorCode::invalid_argument, "eigh: non-finite input");
  const auto n = s.rows();
  Eigh out;
#ifdef KSOS_HAVE_LAPACKE
  out.eigenvectors = s;
  out.eigenvalues.resize(n);
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n),
                     out.eigenvectors.data(), static_cast<lapack_int>(n), out.eigenvalues.data());
  require(info == 0, ErrorCode::invalid_argument, "eigh: dsyevd failed to converge");
#else
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  require(es.info() == Eigen::Success, ErrorCode::invalid_argument, "eigh: eigensolver failed");
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = es.eigenvectors();
#endif
  return out;
}

Matrix positive_part(const Matrix& s) {
  const Eigh es = eigh(s);
  const Vector clipped = es.eigenvalues.cwiseMax(0.0);
  // skip the zeroed eigenspace entirely
  const auto n = s.rows();
  Eigen::Index first = 0;
  while (first < n && clipped(first) <= 0.0) ++first;
  if (first == n) return Matrix::Zero(n, n);
  const auto k = n - first;
  const Matrix u = es.eigenvectors.rightCols(k);
  return u * clipped.tail(k).asDiagonal() * u.transpose();
}

PsdNorms psd_norms(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::dimension_mismatch, "psd_norms: matrix must be square");
  PsdNorms out;
  out.nuclear = a.trace();
  out.frobenius_sq = a.squaredNorm();
  return out;
}

double abs_row_sum_bound(const Matrix& s) { return s.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace ksos
