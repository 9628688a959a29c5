#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmmi/align.hpp"
#include "cmmi/block_model.hpp"
#include "cmmi/core.hpp"
#include "cmmi/spectral_embed.hpp"

namespace cmmi {

/// Estimated block over the first chain block's rows and the last chain
/// block's columns, with optional entrywise inference.
struct RecoveredBlock {
  EntityIndexSet row_entities;
  EntityIndexSet col_entities;
  Matrix estimate;
  std::optional<Matrix> std_error;
  std::optional<Matrix> ci_lower;
  std::optional<Matrix> ci_upper;
  std::vector<std::string> chain;
};

/// Embeddings keyed by block id and embedding spec. Not thread-safe; use one
/// cache per thread.
class EmbeddingCache {
 public:
  const Embedding& get(const RescaledBlock& block, const EmbedSpec& spec, Diagnostics* diag = nullptr) {
    const Key key{block.block_id, static_cast<int>(spec.mode), spec.signature.d_plus, spec.signature.d_minus};
    auto it = entries_.find(key);
    if (it == entries_.end()) it = entries_.emplace(key, embed(block, spec, diag)).first;
    return it->second;
  }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  using Key = std::tuple<std::string, int, Index, Index>;
  std::map<Key, Embedding> entries_;
};

/// Everything computed along a chain; inference reuses the embeddings and the
/// composed alignment.
struct ChainEstimate {
  RecoveredBlock block;
  EmbedSpec spec;
  std::vector<Embedding> embeddings;
  std::vector<AlignmentMap> links;
  Matrix composed;
};

/// Chain-linked recovery: embed every block, align each consecutive pair on
/// its shared entities, compose the alignments and read off the block between
/// the chain's two ends.
inline ChainEstimate cmmi_chain(std::span<const RescaledBlock> blocks, const EmbedSpec& spec,
                                EmbeddingCache* cache = nullptr, Diagnostics* diag = nullptr) {
  if (blocks.empty()) throw DataError("chain is empty");
  if (spec.mode != EmbedMode::asymmetric)
    for (const auto& b : blocks)
      if (!b.symmetric) throw DataError("block '" + b.block_id + "' is not symmetric");

  ChainEstimate out;
  out.spec = spec;
  out.embeddings.reserve(blocks.size());
  for (const auto& b : blocks) out.embeddings.push_back(cache ? cache->get(b, spec, diag) : embed(b, spec, diag));

  const Index d = spec.d();
  for (std::size_t k = 1; k < blocks.size(); ++k) {
    const Overlap ov = compute_overlap(blocks[k - 1], blocks[k]);
    out.links.push_back(align_pair(out.embeddings[k - 1], out.embeddings[k], ov, spec.mode, diag));
  }
  out.composed = out.links.empty() ? Matrix(Matrix::Identity(d, d)) : compose(out.links);

  const Embedding& first = out.embeddings.front();
  const Embedding& last = out.embeddings.back();
  Matrix left = first.x * out.composed;
  switch (spec.mode) {
    case EmbedMode::psd: out.block.estimate = left * last.x.transpose(); break;
    case EmbedMode::indefinite:
      out.block.estimate = left * signature_core(spec.signature) * last.x.transpose();
      break;
    case EmbedMode::asymmetric: out.block.estimate = left * last.y->transpose(); break;
  }
  out.block.row_entities = blocks.front().row_entities;
  out.block.col_entities = blocks.back().col_entities;
  for (const auto& b : blocks) out.block.chain.push_back(b.block_id);
  return out;
}

inline RecoveredBlock cmmi_psd(std::span<const RescaledBlock> blocks, Index d, EmbeddingCache* cache = nullptr,
                               Diagnostics* diag = nullptr) {
  return cmmi_chain(blocks, EmbedSpec::psd(d), cache, diag).block;
}

inline RecoveredBlock cmmi_indefinite(std::span<const RescaledBlock> blocks, Signature sig,
                                      EmbeddingCache* cache = nullptr, Diagnostics* diag = nullptr) {
  return cmmi_chain(blocks, EmbedSpec::indefinite(sig), cache, diag).block;
}

inline RecoveredBlock cmmi_asymmetric(std::span<const RescaledBlock> blocks, Index d,
                                      EmbeddingCache* cache = nullptr, Diagnostics* diag = nullptr) {
  return cmmi_chain(blocks, EmbedSpec::asymmetric(d), cache, diag).block;
}

struct FirstOrderSplit {
  Matrix m_star;
  Matrix remainder;
};

/// Splits the recovery error into its leading linear term
///   E_first X_f (X_f^T X_f)^-1 X_l^T + X_f (X_l^T X_l)^-1 X_l^T E_last
/// and the remainder, given the true latent rows of the two chain ends.
inline FirstOrderSplit first_order_decomposition(const Matrix& x_first, const Matrix& x_last,
                                                 const Matrix& e_first, const Matrix& e_last,
                                                 const Matrix& estimate, const Matrix& truth) {
  const Index n0 = x_first.rows();
  const Index nl = x_last.rows();
  if (x_first.cols() != x_last.cols() || e_first.rows() != n0 || e_first.cols() != n0 ||
      e_last.rows() != nl || e_last.cols() != nl || estimate.rows() != n0 || estimate.cols() != nl ||
      truth.rows() != n0 || truth.cols() != nl)
    throw DataError("first_order_decomposition: shape mismatch");
  const Matrix gram_first = x_first.transpose() * x_first;
  const Matrix gram_last = x_last.transpose() * x_last;
  const Matrix proj_first = gram_first.ldlt().solve(x_last.transpose());  // (X_f^T X_f)^-1 X_l^T
  const Matrix proj_last = gram_last.ldlt().solve(x_last.transpose());    // (X_l^T X_l)^-1 X_l^T
  FirstOrderSplit out;
  out.m_star = (e_first * x_first) * proj_first + x_first * (proj_last * e_last);
  out.remainder = estimate - truth - out.m_star;
  return out;
}

}  // namespace cmmi
