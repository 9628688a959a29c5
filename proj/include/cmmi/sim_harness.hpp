#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cmmi/aggregate.hpp"
#include "cmmi/block_model.hpp"
#include "cmmi/core.hpp"
#include "cmmi/csv.hpp"
#include "cmmi/inference.hpp"
#include "cmmi/integrate.hpp"
#include "cmmi/random.hpp"
#include "cmmi/stats.hpp"

namespace cmmi::sim {

enum class Layout { diagonal_chain, diagonal_chain_asymmetric };

struct SimConfig {
  Index n_total = 600;
  EmbedMode mode = EmbedMode::psd;
  /// Eigenvalues (singular values for asymmetric) as multiples of n_total;
  /// the signs set the signature in indefinite mode.
  std::vector<double> eigen_profile{1.0, 0.75, 0.5};
  double p = 0.3;
  double p_breve = 0.1;
  std::optional<Index> block_size;  ///< absolute n, overrides p
  std::optional<Index> overlap;     ///< absolute m, overrides p_breve
  double q = 0.8;
  double sigma = 0.5;
  Index chain_length = 2;
  Layout layout = Layout::diagonal_chain;
  std::uint64_t seed = 0;
  Index replicates = 1;
  /// Worker threads; 0 uses the hardware concurrency.
  unsigned threads = 1;
  /// Record wall time per replicate (non-deterministic output when set).
  bool timing = false;

  Signature signature() const {
    Signature s;
    for (double v : eigen_profile) (v > 0 ? s.d_plus : s.d_minus) += 1;
    return s;
  }
  Index d() const { return static_cast<Index>(eigen_profile.size()); }
  Index n_block() const { return block_size ? *block_size : static_cast<Index>(std::llround(p * n_total)); }
  Index m_overlap() const {
    return overlap ? *overlap : static_cast<Index>(std::llround(p_breve * static_cast<double>(n_block())));
  }
};

/// Throws DataError unless the configuration is usable.
inline void validate(const SimConfig& cfg) {
  if (cfg.eigen_profile.empty()) throw DataError("eigen_profile is empty");
  for (double v : cfg.eigen_profile)
    if (v == 0.0 || !std::isfinite(v)) throw DataError("eigen_profile entries must be finite and nonzero");
  if (cfg.mode != EmbedMode::indefinite)
    for (double v : cfg.eigen_profile)
      if (v < 0.0) throw DataError("negative eigen_profile entries need indefinite mode");
  if ((cfg.mode == EmbedMode::asymmetric) != (cfg.layout == Layout::diagonal_chain_asymmetric))
    throw DataError("asymmetric mode goes with the asymmetric layout and vice versa");
  if (!(cfg.q > 0.0 && cfg.q <= 1.0)) throw DataError("q must lie in (0, 1]");
  if (!(cfg.sigma >= 0.0)) throw DataError("sigma must be nonnegative");
  if (cfg.chain_length < 1) throw DataError("chain length must be at least 1");
  if (cfg.replicates < 1) throw DataError("replicates must be positive");
  const Index n = cfg.n_block(), m = cfg.m_overlap(), d = cfg.d();
  if (n < d) throw DataError("block size is below the rank");
  if (m < d) throw DataError("overlap is below the rank");
  if (m >= n) throw DataError("overlap must be smaller than the block size");
  if (n + cfg.chain_length * (n - m) > cfg.n_total)
    throw DataError("chain of " + std::to_string(cfg.chain_length + 1) + " blocks of size " + std::to_string(n) +
                    " with overlap " + std::to_string(m) + " does not fit in " + std::to_string(cfg.n_total));
}

/// Latent truth: P = x core x^T for symmetric modes, P = x y^T otherwise.
struct Population {
  Matrix x;
  std::optional<Matrix> y;
  Signature signature;

  Matrix block(const EntityIndexSet& rows, const EntityIndexSet& cols) const {
    const Matrix xr = linalg::gather_rows(x, rows.ids());
    const Matrix xc = linalg::gather_rows(y ? *y : x, cols.ids());
    if (y || signature.d_minus == 0) return xr * xc.transpose();
    return xr * signature_core(signature) * xc.transpose();
  }
  Matrix full() const {
    const auto all = EntityIndexSet::range(0, static_cast<std::size_t>(x.rows()));
    return block(all, all);
  }
};

/// Haar-distributed n x d matrix with orthonormal columns: Q from the QR of
/// a Gaussian matrix with the signs of R's diagonal moved into Q.
inline Matrix haar_orthonormal(Index n, Index d, CounterRng& rng) {
  const Matrix g = rng.gaussian_matrix(n, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, d);
  const Matrix& r = qr.matrixQR();
  for (Index k = 0; k < d; ++k)
    if (r(k, k) < 0.0) q.col(k) = -q.col(k);
  return q;
}

inline Population generate_population(const SimConfig& cfg, CounterRng& rng) {
  const Index n = cfg.n_total, d = cfg.d();
  const double scale = static_cast<double>(n);
  // Positives in descending order, then negatives from most negative.
  std::vector<double> profile = cfg.eigen_profile;
  std::stable_sort(profile.begin(), profile.end(), [](double a, double b) {
    if ((a > 0) != (b > 0)) return a > 0;
    return a > 0 ? a > b : a < b;
  });
  Vector root(d);
  for (Index k = 0; k < d; ++k) root[k] = std::sqrt(std::abs(profile[static_cast<std::size_t>(k)]) * scale);
  Population pop;
  pop.signature = cfg.mode == EmbedMode::indefinite ? cfg.signature() : Signature{d, 0};
  pop.x = haar_orthonormal(n, d, rng) * root.asDiagonal();
  if (cfg.mode == EmbedMode::asymmetric) pop.y = haar_orthonormal(n, d, rng) * root.asDiagonal();
  return pop;
}

/// Entity window of chain block i.
inline EntityIndexSet chain_window(const SimConfig& cfg, Index i) {
  const Index n = cfg.n_block(), m = cfg.m_overlap();
  return EntityIndexSet::range(static_cast<std::size_t>(i * (n - m)), static_cast<std::size_t>(n));
}

/// Observed block over `rows` x `cols` of the population: additive
/// N(0, sigma^2) noise and a Bernoulli(q) mask, both symmetric when
/// `symmetric` is set (upper triangle drawn, diagonal included).
inline ObservedBlock observe(const Population& pop, std::string id, const EntityIndexSet& rows,
                             const EntityIndexSet& cols, bool symmetric, double sigma, double q,
                             CounterRng& noise_rng, CounterRng& mask_rng) {
  Matrix values = pop.block(rows, cols);
  const Index nr = values.rows(), nc = values.cols();
  Mask mask(nr, nc);
  for (Index j = 0; j < nc; ++j)
    for (Index i = 0; i < (symmetric ? j + 1 : nr); ++i) {
      const double e = sigma > 0.0 ? sigma * noise_rng.normal() : 0.0;
      const bool seen = q >= 1.0 || mask_rng.bernoulli(q);
      values(i, j) += e;
      mask(i, j) = seen;
      if (symmetric && i != j) {
        values(j, i) = values(i, j);
        mask(j, i) = seen;
      }
    }
  return make_observed_block(std::move(id), rows, symmetric ? std::nullopt : std::optional(cols), std::move(values),
                             std::move(mask), q);
}

/// Observed chain blocks "B0".."BL" on consecutive diagonal windows.
inline std::vector<ObservedBlock> carve_chain(const Population& pop, const SimConfig& cfg, CounterRng& noise_rng,
                                              CounterRng& mask_rng) {
  validate(cfg);
  const bool symmetric = cfg.layout == Layout::diagonal_chain;
  std::vector<ObservedBlock> blocks;
  for (Index i = 0; i <= cfg.chain_length; ++i) {
    const auto w = chain_window(cfg, i);
    blocks.push_back(observe(pop, "B" + std::to_string(i), w, w, symmetric, cfg.sigma, cfg.q, noise_rng, mask_rng));
  }
  return blocks;
}

inline EmbedSpec embed_spec(const SimConfig& cfg) {
  switch (cfg.mode) {
    case EmbedMode::psd: return EmbedSpec::psd(cfg.d());
    case EmbedMode::indefinite: return EmbedSpec::indefinite(cfg.signature());
    case EmbedMode::asymmetric: return EmbedSpec::asymmetric(cfg.d());
  }
  throw UsageError("unknown mode");
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ReplicateMetrics {
  Index replicate = 0;
  Index n_total = 0;
  double p = 0.0, p_breve = 0.0, q = 0.0, sigma = 0.0;
  Index chain_length = 0;
  bool ok = false;
  std::string error;
  double max_err = kNaN;
  double rel_fro = kNaN;
  double first_order_max = kNaN;  ///< psd mode only
  double remainder_max = kNaN;    ///< psd mode only
  double wall_ms = 0.0;
};

struct ExperimentResult {
  SimConfig config;
  std::vector<ReplicateMetrics> replicates;

  std::size_t failures() const {
    return static_cast<std::size_t>(
        std::count_if(replicates.begin(), replicates.end(), [](const auto& r) { return !r.ok; }));
  }
  std::vector<double> column(double ReplicateMetrics::*field) const {
    std::vector<double> out;
    for (const auto& r : replicates)
      if (r.ok) out.push_back(r.*field);
    return out;
  }
  double median(double ReplicateMetrics::*field) const {
    const auto v = column(field);
    return v.empty() ? kNaN : stats::median(v);
  }
};

/// Everything one replicate draws: the truth and the rescaled chain.
struct ReplicateData {
  Population population;
  std::vector<ObservedBlock> observed;
  std::vector<RescaledBlock> rescaled;
};

inline ReplicateData draw_replicate(const SimConfig& cfg, Index replicate) {
  const auto r = static_cast<std::uint64_t>(replicate);
  auto pop_rng = CounterRng::substream(cfg.seed, r, StreamTag::population);
  auto noise_rng = CounterRng::substream(cfg.seed, r, StreamTag::noise);
  auto mask_rng = CounterRng::substream(cfg.seed, r, StreamTag::mask);
  ReplicateData data;
  data.population = generate_population(cfg, pop_rng);
  data.observed = carve_chain(data.population, cfg, noise_rng, mask_rng);
  for (const auto& b : data.observed) data.rescaled.push_back(rescale(b, cfg.q));
  return data;
}

/// Runs `task(i)` for i in [0, count) on up to `threads` workers. Results
/// must be written to slot i so the outcome does not depend on scheduling.
template <class Task>
void parallel_for(Index count, unsigned threads, Task&& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<Index>(threads, std::max<Index>(count, 1)));
  if (threads <= 1) {
    for (Index i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

inline ReplicateMetrics run_replicate(const SimConfig& cfg, Index replicate) {
  ReplicateMetrics m;
  m.replicate = replicate;
  m.n_total = cfg.n_total;
  m.p = cfg.p;
  m.p_breve = cfg.p_breve;
  m.q = cfg.q;
  m.sigma = cfg.sigma;
  m.chain_length = cfg.chain_length;
  const auto start = std::chrono::steady_clock::now();
  try {
    const ReplicateData data = draw_replicate(cfg, replicate);
    const ChainEstimate est = cmmi_chain(data.rescaled, embed_spec(cfg));
    const auto& first = data.rescaled.front();
    const auto& last = data.rescaled.back();
    const Matrix truth = data.population.block(first.row_entities, last.col_entities);
    const Matrix err = est.block.estimate - truth;
    m.max_err = max_abs(err);
    m.rel_fro = err.norm() / truth.norm();
    if (cfg.mode == EmbedMode::psd) {
      const Matrix x_first = linalg::gather_rows(data.population.x, first.row_entities.ids());
      const Matrix x_last = linalg::gather_rows(data.population.x, last.row_entities.ids());
      const Matrix e_first = first.a - data.population.block(first.row_entities, first.col_entities);
      const Matrix e_last = last.a - data.population.block(last.row_entities, last.col_entities);
      const auto split = first_order_decomposition(x_first, x_last, e_first, e_last, est.block.estimate, truth);
      m.first_order_max = max_abs(split.m_star);
      m.remainder_max = max_abs(split.remainder);
    }
    m.ok = true;
  } catch (const std::exception& e) {
    m.error = e.what();
  }
  if (cfg.timing)
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return m;
}

/// Carve, recover and score every replicate. Failures are recorded per
/// replicate rather than aborting.
inline ExperimentResult run_experiment(const SimConfig& cfg) {
  validate(cfg);
  ExperimentResult out;
  out.config = cfg;
  out.replicates.resize(static_cast<std::size_t>(cfg.replicates));
  parallel_for(cfg.replicates, cfg.threads,
               [&](Index r) { out.replicates[static_cast<std::size_t>(r)] = run_replicate(cfg, r); });
  return out;
}

inline std::string results_csv_header() {
  return "replicate,N,p,p_breve,q,sigma,L,max_err,rel_fro,first_order_max,remainder_max,wall_ms\n";
}

inline std::string format_results_rows(const ExperimentResult& result) {
  auto num = [](double v) { return std::isnan(v) ? std::string(csv::kMissing) : csv::format_double(v); };
  std::ostringstream out;
  for (const auto& r : result.replicates)
    out << r.replicate << ',' << r.n_total << ',' << num(r.p) << ',' << num(r.p_breve) << ',' << num(r.q) << ','
        << num(r.sigma) << ',' << r.chain_length << ',' << num(r.max_err) << ',' << num(r.rel_fro) << ','
        << num(r.first_order_max) << ',' << num(r.remainder_max) << ',' << num(r.wall_ms) << '\n';
  return out.str();
}

/// Standardized errors (estimate - truth) / sigma_tilde at fixed entries of
/// the recovered block, sigma_tilde from the population parameters.
struct NormalityEntry {
  Index s = 0, t = 0;
  std::vector<double> standardized;
  stats::KsResult ks;
  bool degenerate = false;  ///< sigma_tilde vanished; nothing standardized
};

struct NormalityResult {
  std::vector<NormalityEntry> entries;
  std::size_t failures = 0;
};

inline NormalityResult normality_study(const SimConfig& cfg, const std::vector<std::pair<Index, Index>>& entries) {
  validate(cfg);
  if (cfg.mode != EmbedMode::psd) throw UsageError("the normality study runs in psd mode");
  const auto reps = static_cast<std::size_t>(cfg.replicates);
  std::vector<std::vector<double>> z(reps);
  std::vector<char> degenerate(reps, 0), failed(reps, 0);
  parallel_for(cfg.replicates, cfg.threads, [&](Index r) {
    const auto k = static_cast<std::size_t>(r);
    try {
      const ReplicateData data = draw_replicate(cfg, r);
      const ChainEstimate est = cmmi_chain(data.rescaled, embed_spec(cfg));
      const auto& first = data.rescaled.front();
      const auto& last = data.rescaled.back();
      const auto& pop = data.population;
      const auto vc = population_variance_components(
          linalg::gather_rows(pop.x, first.row_entities.ids()), linalg::gather_rows(pop.x, last.row_entities.ids()),
          pop.block(first.row_entities, first.col_entities), pop.block(last.row_entities, last.col_entities),
          cfg.sigma, cfg.q);
      const Matrix truth = pop.block(first.row_entities, last.col_entities);
      for (const auto& [s, t] : entries) {
        const double se = entry_stderr(vc, s, t);
        if (!(se > 0.0)) {
          degenerate[k] = 1;
          z[k].push_back(kNaN);
          continue;
        }
        z[k].push_back((est.block.estimate(s, t) - truth(s, t)) / se);
      }
    } catch (const std::exception&) {
      failed[k] = 1;
    }
  });
  NormalityResult out;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    NormalityEntry ne;
    ne.s = entries[e].first;
    ne.t = entries[e].second;
    for (std::size_t k = 0; k < reps; ++k) {
      if (failed[k]) continue;
      if (degenerate[k]) ne.degenerate = true;
      else ne.standardized.push_back(z[k][e]);
    }
    if (!ne.degenerate && !ne.standardized.empty()) ne.ks = stats::ks_test_normal(ne.standardized);
    out.entries.push_back(std::move(ne));
  }
  out.failures = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  return out;
}

/// Empirical coverage of plug-in confidence intervals at one entry.
struct CoverageResult {
  std::size_t covered = 0;
  std::size_t total = 0;
  std::size_t failures = 0;
  std::vector<double> stderr_ratio;  ///< plug-in over population sigma_tilde
  double coverage() const { return total ? static_cast<double>(covered) / static_cast<double>(total) : kNaN; }
};

inline CoverageResult coverage_study(const SimConfig& cfg, Index s, Index t, double alpha) {
  validate(cfg);
  if (cfg.mode != EmbedMode::psd) throw UsageError("the coverage study runs in psd mode");
  const auto reps = static_cast<std::size_t>(cfg.replicates);
  std::vector<int> hit(reps, -1);
  std::vector<double> ratio(reps, kNaN);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  parallel_for(cfg.replicates, cfg.threads, [&](Index r) {
    const auto k = static_cast<std::size_t>(r);
    try {
      const ReplicateData data = draw_replicate(cfg, r);
      const ChainEstimate est = cmmi_chain(data.rescaled, embed_spec(cfg));
      const auto& first = data.rescaled.front();
      const auto& last = data.rescaled.back();
      const auto& pop = data.population;
      const double se = entry_stderr(variance_components(est, first, last), s, t);
      const double truth = pop.block(first.row_entities, last.col_entities)(s, t);
      const double e = est.block.estimate(s, t);
      hit[k] = std::abs(e - truth) <= z * se ? 1 : 0;
      const auto vc = population_variance_components(
          linalg::gather_rows(pop.x, first.row_entities.ids()), linalg::gather_rows(pop.x, last.row_entities.ids()),
          pop.block(first.row_entities, first.col_entities), pop.block(last.row_entities, last.col_entities),
          cfg.sigma, cfg.q);
      ratio[k] = se / entry_stderr(vc, s, t);
    } catch (const std::exception&) {
    }
  });
  CoverageResult out;
  for (std::size_t k = 0; k < reps; ++k) {
    if (hit[k] < 0) {
      ++out.failures;
      continue;
    }
    ++out.total;
    out.covered += static_cast<std::size_t>(hit[k]);
    out.stderr_ratio.push_back(ratio[k]);
  }
  return out;
}

/// Sweep over block size n with the overlap pinned to the rank: m = d, and
/// N = n + L (n - d) so the chain spans the diagonal.
struct MinimalOverlapPoint {
  Index n = 0;
  ExperimentResult result;
};

inline std::vector<MinimalOverlapPoint> minimal_overlap_study(SimConfig cfg, const std::vector<Index>& sizes) {
  std::vector<MinimalOverlapPoint> out;
  for (Index n : sizes) {
    cfg.block_size = n;
    cfg.overlap = cfg.d();
    cfg.n_total = n + cfg.chain_length * (n - cfg.d());
    out.push_back({n, run_experiment(cfg)});
  }
  return out;
}

/// Two sources observing overlapping windows at different noise levels. The
/// chain runs from source 0's block to source 1's block, before and after
/// inverse-variance aggregation.
struct AggregationConfig {
  Index n_total = 600;
  Index block_size = 400;
  Index overlap = 200;
  std::vector<double> eigen_profile{1.0, 0.75, 0.5};
  double q = 0.8;
  double sigma_first = 0.2;
  double sigma_second = 1.0;
  std::uint64_t seed = 0;
  Index replicates = 50;
  unsigned threads = 1;
};

struct AggregationResult {
  std::vector<double> max_err_before;
  std::vector<double> max_err_after;
  /// Per replicate: mean squared error of fused values over cells both
  /// sources observed.
  std::vector<double> fused_mse;
  std::size_t failures = 0;
  double optimal_variance = 0.0;  ///< (sum sigma_i^-2)^-1
};

inline AggregationResult aggregation_study(const AggregationConfig& cfg) {
  if (cfg.block_size * 2 - cfg.overlap > cfg.n_total || cfg.overlap >= cfg.block_size)
    throw DataError("aggregation layout does not fit");
  SimConfig pc;
  pc.n_total = cfg.n_total;
  pc.eigen_profile = cfg.eigen_profile;
  const Index d = pc.d();
  const auto reps = static_cast<std::size_t>(cfg.replicates);
  std::vector<double> before(reps, kNaN), after(reps, kNaN), mse(reps, kNaN);
  parallel_for(cfg.replicates, cfg.threads, [&](Index r) {
    const auto k = static_cast<std::size_t>(r);
    try {
      const auto ru = static_cast<std::uint64_t>(r);
      auto pop_rng = CounterRng::substream(cfg.seed, ru, StreamTag::population);
      auto noise_rng = CounterRng::substream(cfg.seed, ru, StreamTag::noise);
      auto mask_rng = CounterRng::substream(cfg.seed, ru, StreamTag::mask);
      const Population pop = generate_population(pc, pop_rng);
      const auto w0 = EntityIndexSet::range(0, static_cast<std::size_t>(cfg.block_size));
      const auto w1 = EntityIndexSet::range(static_cast<std::size_t>(cfg.block_size - cfg.overlap),
                                            static_cast<std::size_t>(cfg.block_size));
      std::vector<ObservedBlock> raw;
      raw.push_back(observe(pop, "S0", w0, w0, true, cfg.sigma_first, cfg.q, noise_rng, mask_rng));
      raw.push_back(observe(pop, "S1", w1, w1, true, cfg.sigma_second, cfg.q, noise_rng, mask_rng));
      const Matrix truth = pop.block(w0, w1);

      auto recover = [&](const std::vector<ObservedBlock>& blocks) {
        std::vector<RescaledBlock> chain;
        for (const auto& b : blocks) chain.push_back(rescale(b));
        return max_abs(cmmi_psd(chain, d).estimate - truth);
      };
      before[k] = recover(raw);

      std::vector<NoiseEstimate> noise;
      for (const auto& b : raw) noise.push_back(estimate_noise(b, d));
      const FusedTable fused = fuse(raw, noise);
      after[k] = recover(redistribute(fused, raw));

      // Cells of the shared window seen by both sources.
      const Index off = cfg.block_size - cfg.overlap;
      const Matrix p_shared = pop.block(w1, w1).topLeftCorner(cfg.overlap, cfg.overlap);
      double ss = 0.0;
      Index count = 0;
      for (Index j = 0; j < cfg.overlap; ++j)
        for (Index i = 0; i <= j; ++i)
          if (raw[0].mask(off + i, off + j) && raw[1].mask(i, j)) {
            const double e = fused.values(off + i, off + j) - p_shared(i, j);
            ss += e * e;
            ++count;
          }
      mse[k] = count ? ss / static_cast<double>(count) : kNaN;
    } catch (const std::exception&) {
    }
  });
  AggregationResult out;
  const double s0 = cfg.sigma_first, s1 = cfg.sigma_second;
  out.optimal_variance = 1.0 / (1.0 / (s0 * s0) + 1.0 / (s1 * s1));
  for (std::size_t k = 0; k < reps; ++k) {
    if (std::isnan(before[k]) || std::isnan(after[k]) || std::isnan(mse[k])) {
      ++out.failures;
      continue;
    }
    out.max_err_before.push_back(before[k]);
    out.max_err_after.push_back(after[k]);
    out.fused_mse.push_back(mse[k]);
  }
  return out;
}

/// Parameter grid from a JSON config. Scalar or array values are accepted for
/// N, L, sigma and block_size; arrays are swept in the order N, L, sigma,
/// block_size.
struct SweepConfig {
  SimConfig base;
  std::vector<Index> n_totals;
  std::vector<Index> chain_lengths;
  std::vector<double> sigmas;
  std::vector<std::optional<Index>> block_sizes;

  std::vector<SimConfig> points() const {
    std::vector<SimConfig> out;
    for (Index n : n_totals)
      for (Index l : chain_lengths)
        for (double s : sigmas)
          for (const auto& b : block_sizes) {
            SimConfig c = base;
            c.n_total = n;
            c.chain_length = l;
            c.sigma = s;
            c.block_size = b;
            out.push_back(c);
          }
    return out;
  }
};

namespace detail {

template <class T>
std::vector<T> scalar_or_list(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return {fallback};
  const auto& v = doc[key];
  try {
    if (v.is_array()) {
      if (v.empty()) throw DataError(std::string("config '") + key + "' is an empty list");
      return v.get<std::vector<T>>();
    }
    return {v.get<T>()};
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("config '") + key + "' has the wrong type");
  }
}

template <class T>
T value_or(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("config '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline SweepConfig parse_sweep_config(const nlohmann::json& doc) {
  static const char* const kKnown[] = {"N", "mode", "eigen_profile", "p", "p_breve", "overlap", "block_size",
                                       "q", "sigma", "L", "replicates", "threads"};
  if (!doc.is_object()) throw DataError("simulation config must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return key == k; }) ==
        std::end(kKnown))
      throw DataError("unknown simulation config key '" + key + "'");
  SweepConfig sc;
  SimConfig& c = sc.base;
  const std::string mode = detail::value_or<std::string>(doc, "mode", "psd");
  if (mode == "psd") c.mode = EmbedMode::psd;
  else if (mode == "indef") {
    c.mode = EmbedMode::indefinite;
    c.eigen_profile = {1.0, 0.5, -0.5, -1.0};
  } else if (mode == "asym") {
    c.mode = EmbedMode::asymmetric;
    c.layout = Layout::diagonal_chain_asymmetric;
  } else throw DataError("unknown mode '" + mode + "'");
  c.eigen_profile = detail::value_or(doc, "eigen_profile", c.eigen_profile);
  c.p = detail::value_or(doc, "p", c.p);
  c.p_breve = detail::value_or(doc, "p_breve", c.p_breve);
  if (doc.contains("overlap")) c.overlap = detail::value_or<Index>(doc, "overlap", 0);
  c.q = detail::value_or(doc, "q", c.q);
  c.replicates = detail::value_or(doc, "replicates", c.replicates);
  c.threads = detail::value_or(doc, "threads", c.threads);
  sc.n_totals = detail::scalar_or_list<Index>(doc, "N", c.n_total);
  sc.chain_lengths = detail::scalar_or_list<Index>(doc, "L", c.chain_length);
  sc.sigmas = detail::scalar_or_list<double>(doc, "sigma", c.sigma);
  if (doc.contains("block_size")) {
    for (Index b : detail::scalar_or_list<Index>(doc, "block_size", 0)) sc.block_sizes.emplace_back(b);
  } else {
    sc.block_sizes.emplace_back(std::nullopt);
  }
  for (const auto& point : sc.points()) validate(point);
  return sc;
}

inline SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  try {
    return parse_sweep_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace cmmi::sim
