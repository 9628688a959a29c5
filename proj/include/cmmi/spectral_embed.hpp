#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cmmi/block_model.hpp"
#include "cmmi/core.hpp"
#include "cmmi/csv.hpp"
#include "cmmi/linalg.hpp"

namespace cmmi {

/// Counts of retained positive and negative eigenvalues.
struct Signature {
  Index d_plus = 0;
  Index d_minus = 0;

  Index d() const noexcept { return d_plus + d_minus; }
  friend bool operator==(const Signature&, const Signature&) = default;
};

/// diag(+1 x d_plus, -1 x d_minus).
inline Matrix signature_core(const Signature& sig) {
  Vector diag(sig.d());
  diag.head(sig.d_plus).setOnes();
  diag.tail(sig.d_minus).setConstant(-1.0);
  return diag.asDiagonal();
}

enum class EmbedMode { psd, indefinite, asymmetric };

inline const char* to_string(EmbedMode m) {
  switch (m) {
    case EmbedMode::psd: return "psd";
    case EmbedMode::indefinite: return "indef";
    case EmbedMode::asymmetric: return "asym";
  }
  return "?";
}

/// Latent positions of one block. For symmetric modes `x` reproduces the block
/// as x * core * x^T; asymmetric embeddings add right positions `y`.
struct Embedding {
  std::string block_id;
  Matrix x;
  std::optional<Matrix> y;
  Vector spectrum;
  Signature signature;
  double residual_fro = 0.0;

  Index d() const noexcept { return x.cols(); }
  Index n() const noexcept { return x.rows(); }
};

struct ResidualScore {
  std::string block_id;
  double c = 0.0;
};

namespace detail {

inline void require_symmetric(const RescaledBlock& block) {
  if (!block.symmetric || block.a.rows() != block.a.cols())
    throw DataError("block '" + block.block_id + "' is not symmetric");
  const double scale = std::max(1.0, max_abs(block.a));
  if (max_abs(block.a - block.a.transpose()) > 1e-9 * scale)
    throw DataError("block '" + block.block_id + "' has asymmetric values");
}

// Sum of squares of the eigenvalues left out when keeping `top` from the top
// and `bottom` from the bottom of an ascending spectrum. Summed directly so an
// exact low-rank block gives a residual at rounding level.
inline double discarded_energy(const Vector& ascending, Index top, Index bottom) {
  double s = 0.0;
  for (Index k = bottom; k < ascending.size() - top; ++k) s += ascending[k] * ascending[k];
  return s;
}

inline void warn_if_gap_degenerate(Diagnostics* diag, const std::string& id, double kept, double next,
                                   double scale) {
  if (std::abs(kept - next) <= 1e-10 * std::max(scale, 1e-300))
    warn(diag, "block '" + id + "': repeated eigenvalue across the retained/discarded boundary");
}

}  // namespace detail

/// Scaled leading eigenvectors U * Lambda^(1/2) for the d algebraically
/// largest eigenvalues, which must all be positive.
inline Embedding embed_psd(const RescaledBlock& block, Index d, Diagnostics* diag = nullptr) {
  detail::require_symmetric(block);
  const Index n = block.a.rows();
  if (d < 1 || d > n) throw DataError("block '" + block.block_id + "': rank " + std::to_string(d) + " out of range");
  auto eig = linalg::symmetric_eigen(block.a, d, 0);
  if (!(eig.top_values[d - 1] > 0.0))
    throw NumericalError("block '" + block.block_id + "': eigenvalue " + std::to_string(d) +
                         " is not positive; the block is rank deficient at this rank");
  if (d < n)
    detail::warn_if_gap_degenerate(diag, block.block_id, eig.top_values[d - 1], eig.values[n - d - 1],
                                   std::abs(eig.values.cwiseAbs().maxCoeff()));
  Embedding e;
  e.block_id = block.block_id;
  e.signature = {d, 0};
  e.spectrum = eig.top_values;
  e.x = std::move(eig.top_vectors);
  linalg::fix_column_signs(e.x);
  e.x = e.x * e.spectrum.cwiseSqrt().asDiagonal();
  e.residual_fro = std::sqrt(detail::discarded_energy(eig.values, d, 0));
  return e;
}

/// U * |Lambda|^(1/2) over the d_plus largest positive and d_minus most
/// negative eigenvalues; the spectrum keeps signs, positives first.
inline Embedding embed_indefinite(const RescaledBlock& block, Signature sig, Diagnostics* diag = nullptr) {
  detail::require_symmetric(block);
  const Index n = block.a.rows();
  if (sig.d() < 1 || sig.d() > n)
    throw DataError("block '" + block.block_id + "': signature size out of range");
  auto eig = linalg::symmetric_eigen(block.a, sig.d_plus, sig.d_minus);
  const double scale = eig.values.size() > 0 ? eig.values.cwiseAbs().maxCoeff() : 0.0;
  const double tol = 1e-10 * std::max(1.0, scale);
  if (sig.d_plus > 0 && !(eig.top_values[sig.d_plus - 1] > tol))
    throw NumericalError("block '" + block.block_id + "' has fewer than " + std::to_string(sig.d_plus) +
                         " positive eigenvalues");
  if (sig.d_minus > 0 && !(eig.bottom_values[sig.d_minus - 1] < -tol))
    throw NumericalError("block '" + block.block_id + "' has fewer than " + std::to_string(sig.d_minus) +
                         " negative eigenvalues");
  if (sig.d() < n) {
    if (sig.d_plus > 0)
      detail::warn_if_gap_degenerate(diag, block.block_id, eig.top_values[sig.d_plus - 1],
                                     eig.values[n - sig.d_plus - 1], scale);
    if (sig.d_minus > 0)
      detail::warn_if_gap_degenerate(diag, block.block_id, eig.bottom_values[sig.d_minus - 1],
                                     eig.values[sig.d_minus], scale);
  }
  Embedding e;
  e.block_id = block.block_id;
  e.signature = sig;
  e.spectrum.resize(sig.d());
  e.spectrum << eig.top_values, eig.bottom_values;
  e.x.resize(n, sig.d());
  e.x << eig.top_vectors, eig.bottom_vectors;
  linalg::fix_column_signs(e.x);
  e.x = e.x * e.spectrum.cwiseAbs().cwiseSqrt().asDiagonal();
  e.residual_fro = std::sqrt(detail::discarded_energy(eig.values, sig.d_plus, sig.d_minus));
  return e;
}

/// Left and right positions U * Sigma^(1/2), V * Sigma^(1/2) from the top d
/// singular triplets.
inline Embedding embed_asymmetric(const RescaledBlock& block, Index d, Diagnostics* diag = nullptr) {
  const Index n = block.a.rows();
  const Index m = block.a.cols();
  if (d < 1 || d > std::min(n, m))
    throw DataError("block '" + block.block_id + "': rank " + std::to_string(d) + " out of range");
  Eigen::BDCSVD<Matrix> svd(block.a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, s.size() > 0 ? s[0] : 0.0);
  if (!(s[d - 1] > tol))
    throw NumericalError("block '" + block.block_id + "': singular value " + std::to_string(d) + " is zero");
  if (d < s.size()) detail::warn_if_gap_degenerate(diag, block.block_id, s[d - 1], s[d], s[0]);
  Matrix u = svd.matrixU().leftCols(d);
  Matrix v = svd.matrixV().leftCols(d);
  const Vector signs = linalg::fix_column_signs(u);
  v = v * signs.asDiagonal();
  Embedding e;
  e.block_id = block.block_id;
  e.signature = {d, 0};
  e.spectrum = s.head(d);
  const Vector root = e.spectrum.cwiseSqrt();
  e.x = u * root.asDiagonal();
  e.y = v * root.asDiagonal();
  double discarded = 0.0;
  for (Index k = d; k < s.size(); ++k) discarded += s[k] * s[k];
  e.residual_fro = std::sqrt(discarded);
  return e;
}

/// Low-rank reconstruction the embedding stands for.
inline Matrix reconstruct(const Embedding& e) {
  if (e.y) return e.x * e.y->transpose();
  return e.x * signature_core(e.signature) * e.x.transpose();
}

/// Profile log-likelihood of splitting a descending spectrum after the first
/// `split` values into two Gaussian groups with a pooled variance. Returns
/// +infinity when the pooled variance vanishes.
inline double profile_log_likelihood(std::span<const double> values, std::size_t split) {
  const std::size_t p = values.size();
  auto mean_of = [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += values[k];
    return s / static_cast<double>(hi - lo);
  };
  const double m1 = mean_of(0, split);
  const double m2 = mean_of(split, p);
  double ss = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    const double r = values[k] - (k < split ? m1 : m2);
    ss += r * r;
  }
  const double var = ss / static_cast<double>(p - 2);
  if (var <= 0.0) return std::numeric_limits<double>::infinity();
  constexpr double kLog2Pi = 1.8378770664093453;
  return -0.5 * static_cast<double>(p) * (kLog2Pi + std::log(var)) - ss / (2.0 * var);
}

/// Elbow of a descending spectrum by two-group profile likelihood. Ties go to
/// the smaller rank.
inline Index select_rank(std::span<const double> spectrum, Diagnostics* diag = nullptr) {
  if (spectrum.size() < 3) throw DataError("rank selection needs at least 3 values");
  bool constant = true;
  for (double v : spectrum) constant = constant && v == spectrum.front();
  if (constant) {
    warn(diag, "constant spectrum; rank selection defaults to 1");
    return 1;
  }
  Index best = 1;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t split = 1; split < spectrum.size(); ++split) {
    const double ll = profile_log_likelihood(spectrum, split);
    if (ll > best_ll) {
      best_ll = ll;
      best = static_cast<Index>(split);
    }
  }
  return best;
}

inline ResidualScore residual_score(const Embedding& e) {
  const double n = static_cast<double>(e.n());
  if (e.n() < 2) throw DataError("residual score needs at least two entities");
  return {e.block_id, e.residual_fro * std::log(n) / std::pow(n, 1.5)};
}

/// Embedding as CSV: a "block_id,d_plus,d_minus,n" header with its values,
/// the x rows, then "Y" and the y rows for asymmetric embeddings.
inline std::string format_embedding(const Embedding& e) {
  std::ostringstream out;
  out << "block_id,d_plus,d_minus,n\n";
  out << e.block_id << ',' << e.signature.d_plus << ',' << e.signature.d_minus << ',' << e.n() << '\n';
  out << csv::format_matrix(e.x);
  if (e.y) out << "Y\n" << csv::format_matrix(*e.y);
  return out.str();
}

/// Embeds according to the mode; `rank` is used for psd/asymmetric,
/// `signature` for indefinite.
struct EmbedSpec {
  EmbedMode mode = EmbedMode::psd;
  Signature signature{1, 0};

  Index d() const noexcept { return signature.d(); }
  static EmbedSpec psd(Index d) { return {EmbedMode::psd, {d, 0}}; }
  static EmbedSpec indefinite(Signature s) { return {EmbedMode::indefinite, s}; }
  static EmbedSpec asymmetric(Index d) { return {EmbedMode::asymmetric, {d, 0}}; }
};

inline Embedding embed(const RescaledBlock& block, const EmbedSpec& spec, Diagnostics* diag = nullptr) {
  switch (spec.mode) {
    case EmbedMode::psd: return embed_psd(block, spec.d(), diag);
    case EmbedMode::indefinite: return embed_indefinite(block, spec.signature, diag);
    case EmbedMode::asymmetric: return embed_asymmetric(block, spec.d(), diag);
  }
  throw UsageError("unknown embedding mode");
}

}  // namespace cmmi
