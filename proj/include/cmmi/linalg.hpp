#pragma once

#include <Eigen/Eigenvalues>
#include <lapacke.h>

#include <vector>

#include "cmmi/core.hpp"

namespace cmmi::linalg {

/// Full spectrum of a symmetric matrix plus the eigenvectors for its `top`
/// algebraically largest and `bottom` algebraically smallest eigenvalues.
struct SymmetricEigenPairs {
  Vector values;          // all eigenvalues, ascending
  Vector top_values;      // descending
  Matrix top_vectors;     // column k pairs with top_values[k]
  Vector bottom_values;   // ascending, most negative first
  Matrix bottom_vectors;
};

namespace detail {

inline void extract_from_full(const Eigen::SelfAdjointEigenSolver<Matrix>& es, Index top,
                              Index bottom, SymmetricEigenPairs& out) {
  const Index n = es.eigenvalues().size();
  out.values = es.eigenvalues();
  out.top_values.resize(top);
  out.top_vectors.resize(n, top);
  for (Index k = 0; k < top; ++k) {
    out.top_values[k] = es.eigenvalues()[n - 1 - k];
    out.top_vectors.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  out.bottom_values = es.eigenvalues().head(bottom);
  out.bottom_vectors = es.eigenvectors().leftCols(bottom);
}

// Eigenpairs il..iu (1-based, ascending) of the symmetric tridiagonal matrix
// with the given diagonal and off-diagonal, via MRRR.
inline bool tridiagonal_pairs(const Vector& diag, const Vector& offdiag, Index il, Index iu,
                              Vector& values, Matrix& vectors) {
  const Index n = diag.size();
  const Index count = iu - il + 1;
  Vector d = diag;
  Vector e(n);
  e.head(n - 1) = offdiag;
  e[n - 1] = 0.0;
  Vector w(n);
  Matrix z(n, count);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(count));
  lapack_int found = 0;
  lapack_logical tryrac = 1;
  const lapack_int info = LAPACKE_dstemr(
      LAPACK_COL_MAJOR, 'V', 'I', static_cast<lapack_int>(n), d.data(), e.data(), 0.0, 0.0,
      static_cast<lapack_int>(il), static_cast<lapack_int>(iu), &found, w.data(), z.data(),
      static_cast<lapack_int>(n), static_cast<lapack_int>(count), support.data(), &tryrac);
  if (info != 0 || found != count) return false;
  values = w.head(count);
  vectors = std::move(z);
  return true;
}

}  // namespace detail

/// Dense symmetric eigendecomposition that only forms the requested
/// eigenvectors. Small matrices go through the full QR solver; larger ones are
/// reduced to tridiagonal form once, the whole spectrum is taken from the
/// tridiagonal QR iteration, and only the retained vectors are computed and
/// back-transformed.
inline SymmetricEigenPairs symmetric_eigen(const Matrix& a, Index top, Index bottom) {
  const Index n = a.rows();
  SymmetricEigenPairs out;
  constexpr Index kFullSolverLimit = 96;
  if (n <= kFullSolverLimit || top + bottom > n) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    detail::extract_from_full(es, top, bottom, out);
    return out;
  }

  Eigen::Tridiagonalization<Matrix> tri(a);
  const Vector diag = tri.diagonal();
  const Vector offdiag = tri.subDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> values_only;
  values_only.computeFromTridiagonal(diag, offdiag, Eigen::EigenvaluesOnly);
  out.values = values_only.eigenvalues();

  Vector top_vals;
  Matrix top_z;
  Vector bottom_vals;
  Matrix bottom_z;
  bool ok = true;
  if (top > 0) ok = ok && detail::tridiagonal_pairs(diag, offdiag, n - top + 1, n, top_vals, top_z);
  if (bottom > 0) ok = ok && detail::tridiagonal_pairs(diag, offdiag, 1, bottom, bottom_vals, bottom_z);
  if (!ok) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    detail::extract_from_full(es, top, bottom, out);
    return out;
  }

  const auto q = tri.matrixQ();
  out.top_values = top_vals.reverse();
  out.top_vectors = top > 0 ? Matrix(q * top_z.rowwise().reverse()) : Matrix(n, 0);
  out.bottom_values = bottom > 0 ? bottom_vals : Vector(0);
  out.bottom_vectors = bottom > 0 ? Matrix(q * bottom_z) : Matrix(n, 0);
  return out;
}

/// Numerical rank of `m` relative to `rel_tol` times its largest singular value.
inline Index numerical_rank(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  Index r = 0;
  for (Index k = 0; k < s.size(); ++k)
    if (s[k] > rel_tol * s[0]) ++r;
  return r;
}

/// Rows of `m` at the given positions, in order.
template <typename Positions>
Matrix gather_rows(const Matrix& m, const Positions& positions) {
  Matrix out(static_cast<Index>(positions.size()), m.cols());
  Index r = 0;
  for (auto p : positions) out.row(r++) = m.row(static_cast<Index>(p));
  return out;
}

/// Flips each column so that its largest-magnitude entry is positive; ties go
/// to the lowest row index. Returns the applied signs.
inline Vector fix_column_signs(Matrix& m) {
  Vector signs = Vector::Ones(m.cols());
  for (Index k = 0; k < m.cols(); ++k) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index r = 0; r < m.rows(); ++r) {
      const double v = std::abs(m(r, k));
      if (v > best_abs) {
        best_abs = v;
        best = r;
      }
    }
    if (m.rows() > 0 && m(best, k) < 0.0) {
      m.col(k) *= -1.0;
      signs[k] = -1.0;
    }
  }
  return signs;
}

}  // namespace cmmi::linalg
