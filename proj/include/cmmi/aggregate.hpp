#pragma once

#include <span>
#include <string>
#include <vector>

#include "cmmi/block_model.hpp"
#include "cmmi/core.hpp"
#include "cmmi/linalg.hpp"

namespace cmmi {

struct NoiseEstimate {
  std::string block_id;
  double sigma2_hat = 0.0;
};

/// Stand-in for a zero noise estimate so a noiseless source dominates
/// without dividing by zero.
inline constexpr double kNoiseFloor = 1e-12;

/// Masked residual energy per observed cell: ||(B - P_hat) o Omega||_F^2 /
/// ||Omega||_F^2, with P_hat the rank-d truncation of B / q_hat.
inline NoiseEstimate estimate_noise(const ObservedBlock& block, Index d) {
  if (!block.symmetric) throw DataError("noise estimation needs a symmetric block '" + block.block_id + "'");
  const double q = estimate_q(block);
  const Matrix b = block.mask.select(block.values, 0.0);
  if (d < 1 || d > b.rows()) throw DataError("block '" + block.block_id + "': rank out of range");
  const auto eig = linalg::symmetric_eigen(b / q, d, 0);
  const Matrix p_hat = eig.top_vectors * eig.top_values.asDiagonal() * eig.top_vectors.transpose();
  const double residual = block.mask.select(b - p_hat, 0.0).squaredNorm();
  return {block.block_id, residual / static_cast<double>(block.mask.count())};
}

/// Normalized inverse-variance weights.
inline Vector fusion_weights(std::span<const double> sigma2) {
  Vector w(static_cast<Index>(sigma2.size()));
  for (std::size_t i = 0; i < sigma2.size(); ++i) w[static_cast<Index>(i)] = 1.0 / std::max(sigma2[i], kNoiseFloor);
  return w / w.sum();
}

/// Fused observations over the union of all blocks' entities.
struct FusedTable {
  EntityIndexSet row_entities;
  EntityIndexSet col_entities;
  Matrix values;
  Mask mask;
};

/// Each entry becomes the inverse-variance weighted mean of every source that
/// observes it; entries no source observes stay missing.
inline FusedTable fuse(std::span<const ObservedBlock> blocks, std::span<const NoiseEstimate> noise) {
  if (blocks.empty()) throw DataError("nothing to fuse");
  if (noise.size() != blocks.size()) throw DataError("one noise estimate per block is required");
  FusedTable out;
  bool symmetric = true;
  for (const auto& b : blocks) {
    out.row_entities = set_union(out.row_entities, b.row_entities);
    out.col_entities = set_union(out.col_entities, b.col_entities);
    symmetric = symmetric && b.symmetric;
  }
  const Index nr = static_cast<Index>(out.row_entities.size());
  const Index nc = static_cast<Index>(out.col_entities.size());
  Matrix weighted = Matrix::Zero(nr, nc);
  Matrix total = Matrix::Zero(nr, nc);
  Matrix single = Matrix::Zero(nr, nc);  // raw value while one source observes the cell
  Eigen::MatrixXi observers = Eigen::MatrixXi::Zero(nr, nc);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    if (noise[k].block_id != b.block_id) throw DataError("noise estimates are not in block order");
    const double w = 1.0 / std::max(noise[k].sigma2_hat, kNoiseFloor);
    std::vector<Index> rows, cols;
    for (auto id : b.row_entities.ids()) rows.push_back(*out.row_entities.position(id));
    for (auto id : b.col_entities.ids()) cols.push_back(*out.col_entities.position(id));
    for (Index j = 0; j < b.values.cols(); ++j) {
      const Index gj = cols[static_cast<std::size_t>(j)];
      for (Index i = 0; i < b.values.rows(); ++i) {
        if (!b.mask(i, j)) continue;
        const Index gi = rows[static_cast<std::size_t>(i)];
        if (symmetric && gi > gj) continue;  // upper triangle, mirrored below
        weighted(gi, gj) += w * b.values(i, j);
        total(gi, gj) += w;
        single(gi, gj) = b.values(i, j);
        ++observers(gi, gj);
      }
    }
  }
  out.mask = total.array() > 0.0;
  out.values = out.mask.select(weighted.array() / total.array(), 0.0).matrix();
  out.values = (observers.array() == 1).select(single, out.values);
  if (symmetric)
    for (Index j = 0; j < nc; ++j)
      for (Index i = j + 1; i < nr; ++i) {
        out.values(i, j) = out.values(j, i);
        out.mask(i, j) = out.mask(j, i);
      }
  return out;
}

/// Restricts the fused table back onto each block's entities and re-estimates q.
inline std::vector<ObservedBlock> redistribute(const FusedTable& fused, std::span<const ObservedBlock> blocks) {
  std::vector<ObservedBlock> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) {
    const Index nr = static_cast<Index>(b.row_entities.size());
    const Index nc = static_cast<Index>(b.col_entities.size());
    Matrix values(nr, nc);
    Mask mask(nr, nc);
    for (Index j = 0; j < nc; ++j) {
      const auto gj = fused.col_entities.position(b.col_entities[static_cast<std::size_t>(j)]);
      for (Index i = 0; i < nr; ++i) {
        const auto gi = fused.row_entities.position(b.row_entities[static_cast<std::size_t>(i)]);
        if (!gi || !gj) throw DataError("fused table does not cover block '" + b.block_id + "'");
        values(i, j) = fused.values(*gi, *gj);
        mask(i, j) = fused.mask(*gi, *gj);
      }
    }
    ObservedBlock r = make_observed_block(b.block_id, b.row_entities,
                                          b.symmetric ? std::nullopt : std::optional(b.col_entities),
                                          std::move(values), std::move(mask));
    r.q = estimate_q(r);
    out.push_back(std::move(r));
  }
  return out;
}

/// Noise estimation, fusion and redistribution in one pass.
inline std::vector<ObservedBlock> aggregate(std::span<const ObservedBlock> blocks, Index d) {
  std::vector<NoiseEstimate> noise;
  noise.reserve(blocks.size());
  for (const auto& b : blocks) noise.push_back(estimate_noise(b, d));
  return redistribute(fuse(blocks, noise), blocks);
}

}  // namespace cmmi
