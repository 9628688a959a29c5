#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "cmmi/core.hpp"

namespace cmmi::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw DataError("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw DataError("variance needs at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double median(std::span<const double> x) {
  if (x.empty()) throw DataError("median of an empty sample");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("slope needs two or more paired points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw DataError("log-log slope needs positive values");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean(lx), my = mean(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) throw DataError("log-log slope needs distinct x values");
  return sxy / sxx;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Kolmogorov limiting survival function P(K > lambda).
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;  // series converges slowly; the value is 1 to double precision
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against N(0, 1). The p-value uses the
/// limiting distribution at sqrt(n) + 0.12 + 0.11 / sqrt(n) times D.
inline KsResult ks_test_normal(std::span<const double> sample) {
  if (sample.empty()) throw DataError("KS test on an empty sample");
  std::vector<double> v(sample.begin(), sample.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = normal_cdf(v[i]);
    dmax = std::max({dmax, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double rn = std::sqrt(n);
  return {dmax, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * dmax)};
}

}  // namespace cmmi::stats
