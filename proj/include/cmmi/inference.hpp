#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "cmmi/block_model.hpp"
#include "cmmi/core.hpp"
#include "cmmi/integrate.hpp"

namespace cmmi {

/// Projection matrices of the two chain ends (forward n_first x n_last,
/// backward n_last x n_first) and the entrywise variance matrices of the first
/// and last blocks.
struct VarianceComponents {
  Matrix b_fwd;
  Matrix b_bwd;
  Matrix d_first;
  Matrix d_last;
};

namespace detail {

// x (x^T x)^-1 w y^T
inline Matrix projection(const Matrix& x, const Matrix& w, const Matrix& y) {
  const Matrix gram = x.transpose() * x;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()))
    throw NumericalError("latent positions have a singular Gram matrix");
  return x * ldlt.solve(w * y.transpose());
}

}  // namespace detail

/// Plug-in components from a psd chain estimate and the rescaled first and
/// last blocks: B from the estimated positions and composed alignment, D from
/// squared residuals (A - X X^T)^2.
inline VarianceComponents variance_components(const ChainEstimate& chain, const RescaledBlock& first,
                                              const RescaledBlock& last, Diagnostics* diag = nullptr) {
  if (chain.spec.mode != EmbedMode::psd) throw UsageError("entrywise inference is available in psd mode only");
  const Embedding& ef = chain.embeddings.front();
  const Embedding& el = chain.embeddings.back();
  if (ef.block_id != first.block_id || el.block_id != last.block_id)
    throw DataError("variance_components: blocks do not match the chain ends");
  if (!set_intersection(first.row_entities, last.row_entities).empty())
    warn(diag, "first and last chain blocks share entities; the variance formula assumes they do not");
  VarianceComponents vc;
  vc.b_fwd = detail::projection(ef.x, chain.composed, el.x);
  vc.b_bwd = detail::projection(el.x, chain.composed.transpose(), ef.x);
  vc.d_first = (first.a - ef.x * ef.x.transpose()).array().square().matrix();
  vc.d_last = (last.a - el.x * el.x.transpose()).array().square().matrix();
  return vc;
}

/// Population components for simulated data: true latent positions in a
/// common frame, D = (sigma^2 + (1 - q) P^2) / q per entry.
inline VarianceComponents population_variance_components(const Matrix& x_first, const Matrix& x_last,
                                                         const Matrix& p_first, const Matrix& p_last,
                                                         double sigma, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw DataError("q must lie in (0, 1]");
  const Matrix eye = Matrix::Identity(x_first.cols(), x_first.cols());
  VarianceComponents vc;
  vc.b_fwd = detail::projection(x_first, eye, x_last);
  vc.b_bwd = detail::projection(x_last, eye, x_first);
  const double s2 = sigma * sigma;
  vc.d_first = ((s2 + (1.0 - q) * p_first.array().square()) / q).matrix();
  vc.d_last = ((s2 + (1.0 - q) * p_last.array().square()) / q).matrix();
  return vc;
}

/// sqrt( sum_k b_fwd(k,t)^2 d_first(s,k) + sum_k b_bwd(k,s)^2 d_last(t,k) ).
inline double entry_stderr(const VarianceComponents& vc, Index s, Index t) {
  if (s < 0 || s >= vc.d_first.rows() || t < 0 || t >= vc.d_last.rows())
    throw DataError("entry index out of range");
  const double fwd = vc.d_first.row(s).dot(vc.b_fwd.col(t).array().square().matrix());
  const double bwd = vc.d_last.row(t).dot(vc.b_bwd.col(s).array().square().matrix());
  return std::sqrt(fwd + bwd);
}

/// entry_stderr for every (s, t) at once.
inline Matrix stderr_matrix(const VarianceComponents& vc) {
  const Matrix fwd = vc.d_first * vc.b_fwd.array().square().matrix();
  const Matrix bwd = vc.d_last * vc.b_bwd.array().square().matrix();
  return (fwd + bwd.transpose()).cwiseSqrt();
}

/// Standard normal upper-tail probability.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Standard normal quantile: Acklam's rational approximation (relative error
/// about 1.15e-9) refined by one Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("normal_quantile: probability must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  constexpr double kSqrt2Pi = 2.5066282746310002;
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * kSqrt2Pi * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

/// est -/+ z_{alpha/2} * stderr.
inline std::pair<double, double> confidence_interval(double estimate, double std_error, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  if (!(std_error >= 0.0)) throw DataError("standard error must be nonnegative");
  const double half = normal_quantile(1.0 - alpha / 2.0) * std_error;
  return {estimate - half, estimate + half};
}

/// Fills std_error and the interval bounds of a psd chain estimate in place.
inline void attach_inference(ChainEstimate& chain, const RescaledBlock& first, const RescaledBlock& last,
                             double alpha, Diagnostics* diag = nullptr) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  const Matrix se = stderr_matrix(variance_components(chain, first, last, diag));
  const double z = normal_quantile(1.0 - alpha / 2.0);
  chain.block.ci_lower = chain.block.estimate - z * se;
  chain.block.ci_upper = chain.block.estimate + z * se;
  chain.block.std_error = se;
}

}  // namespace cmmi
