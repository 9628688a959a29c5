#pragma once

#include <span>
#include <string>
#include <vector>

#include "cmmi/block_model.hpp"
#include "cmmi/core.hpp"
#include "cmmi/linalg.hpp"
#include "cmmi/spectral_embed.hpp"

namespace cmmi {

enum class AlignmentKind { orthogonal, general_linear };

/// Transformation w with x_from * w ~ x_to on the shared entities.
struct AlignmentMap {
  std::string from_block;
  std::string to_block;
  Matrix w;
  AlignmentKind kind = AlignmentKind::orthogonal;
  Index overlap_size = 0;
};

/// Orthogonal Procrustes: the orthogonal o minimizing ||a o - b||_F, i.e. the
/// polar factor W1 W2^T of a^T b = W1 S W2^T.
inline Matrix procrustes(const Matrix& a, const Matrix& b, Diagnostics* diag = nullptr) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("procrustes: shape mismatch");
  if (a.rows() < a.cols()) throw DataError("procrustes: fewer rows than columns");
  const Matrix cross = a.transpose() * b;
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double scale = s.size() > 0 ? s[0] : 0.0;
  // The polar factor is unique exactly when a^T b is nonsingular.
  const bool unique = scale > 0.0 && s[s.size() - 1] > 1e-12 * scale;
  if (!unique) warn(diag, "procrustes: a^T b is rank deficient; the optimal rotation is not unique");
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Unconstrained least squares w = a^+ b. `rank_tol` is relative to the
/// largest singular value of a.
inline Matrix lsq_align(const Matrix& a, const Matrix& b, double rank_tol = 1e-10) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("lsq_align: shape mismatch");
  if (a.rows() < a.cols()) throw DataError("lsq_align: fewer rows than columns");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[s.size() - 1] > rank_tol * s[0]))
    throw NumericalError("lsq_align: overlap positions are rank deficient");
  return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose() * b;
}

namespace detail {

inline void require_same_rank(const Embedding& a, const Embedding& b) {
  if (a.d() != b.d())
    throw DataError("embeddings '" + a.block_id + "' and '" + b.block_id + "' have different ranks");
}

inline void require_overlap(const Overlap& ov, std::size_t shared, Index d) {
  if (static_cast<Index>(shared) < d)
    throw DataError("overlap between '" + ov.block_a + "' and '" + ov.block_b + "' has " +
                    std::to_string(shared) + " entities, fewer than rank " + std::to_string(d));
}

}  // namespace detail

inline AlignmentMap align_pair_psd(const Embedding& ea, const Embedding& eb, const Overlap& ov,
                                   Diagnostics* diag = nullptr) {
  detail::require_same_rank(ea, eb);
  detail::require_overlap(ov, ov.shared_rows.size(), ea.d());
  const Matrix xa = linalg::gather_rows(ea.x, ov.local_rows_a);
  const Matrix xb = linalg::gather_rows(eb.x, ov.local_rows_b);
  if (linalg::numerical_rank(xa, 1e-10) < ea.d() || linalg::numerical_rank(xb, 1e-10) < eb.d())
    throw NumericalError("overlap between '" + ov.block_a + "' and '" + ov.block_b +
                         "' does not span the latent space");
  return {ea.block_id, eb.block_id, procrustes(xa, xb, diag), AlignmentKind::orthogonal,
          static_cast<Index>(ov.shared_rows.size())};
}

inline AlignmentMap align_pair_indefinite(const Embedding& ea, const Embedding& eb, const Overlap& ov) {
  detail::require_same_rank(ea, eb);
  detail::require_overlap(ov, ov.shared_rows.size(), ea.d());
  const Matrix xa = linalg::gather_rows(ea.x, ov.local_rows_a);
  const Matrix xb = linalg::gather_rows(eb.x, ov.local_rows_b);
  return {ea.block_id, eb.block_id, lsq_align(xa, xb), AlignmentKind::general_linear,
          static_cast<Index>(ov.shared_rows.size())};
}

/// Row overlap gives w_x with x_a w_x ~ x_b; column overlap gives w_y with
/// y_b w_y^T ~ y_a. Both qualifying overlaps are averaged.
inline AlignmentMap align_pair_asymmetric(const Embedding& ea, const Embedding& eb, const Overlap& ov) {
  detail::require_same_rank(ea, eb);
  if (!ea.y || !eb.y) throw DataError("asymmetric alignment needs right positions");
  const Index d = ea.d();
  const bool rows_ok = static_cast<Index>(ov.shared_rows.size()) >= d;
  const bool cols_ok = static_cast<Index>(ov.shared_cols.size()) >= d;
  if (!rows_ok && !cols_ok)
    throw DataError("blocks '" + ov.block_a + "' and '" + ov.block_b +
                    "' share fewer than rank-many rows and columns");
  Matrix w_x, w_y;
  if (rows_ok)
    w_x = lsq_align(linalg::gather_rows(ea.x, ov.local_rows_a), linalg::gather_rows(eb.x, ov.local_rows_b));
  if (cols_ok)
    w_y = lsq_align(linalg::gather_rows(*eb.y, ov.local_cols_b), linalg::gather_rows(*ea.y, ov.local_cols_a))
              .transpose();
  Matrix w = rows_ok && cols_ok ? Matrix(0.5 * (w_x + w_y)) : (rows_ok ? w_x : w_y);
  return {ea.block_id, eb.block_id, std::move(w), AlignmentKind::general_linear,
          static_cast<Index>(std::max(ov.shared_rows.size(), ov.shared_cols.size()))};
}

inline AlignmentMap align_pair(const Embedding& ea, const Embedding& eb, const Overlap& ov, EmbedMode mode,
                               Diagnostics* diag = nullptr) {
  switch (mode) {
    case EmbedMode::psd: return align_pair_psd(ea, eb, ov, diag);
    case EmbedMode::indefinite: return align_pair_indefinite(ea, eb, ov);
    case EmbedMode::asymmetric: return align_pair_asymmetric(ea, eb, ov);
  }
  throw UsageError("unknown alignment mode");
}

/// Left-to-right product of a chain of maps.
inline Matrix compose(std::span<const AlignmentMap> chain) {
  if (chain.empty()) throw DataError("cannot compose an empty chain");
  Matrix w = chain.front().w;
  for (std::size_t k = 1; k < chain.size(); ++k) {
    if (chain[k - 1].to_block != chain[k].from_block)
      throw DataError("broken chain: '" + chain[k - 1].to_block + "' does not continue into '" +
                      chain[k].from_block + "'");
    if (chain[k].w.rows() != w.cols() || chain[k].w.cols() != w.cols())
      throw DataError("chain maps have mixed dimensions");
    w = w * chain[k].w;
  }
  return w;
}

}  // namespace cmmi
