#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmmi/core.hpp"
#include "cmmi/csv.hpp"

namespace cmmi {

/// Strictly increasing list of global entity ids.
class EntityIndexSet {
 public:
  EntityIndexSet() = default;

  explicit EntityIndexSet(std::vector<Index> ids) : ids_(std::move(ids)) {
    for (std::size_t k = 0; k < ids_.size(); ++k) {
      if (ids_[k] < 0) throw DataError("entity ids must be nonnegative");
      if (k > 0 && ids_[k] <= ids_[k - 1]) throw DataError("entity ids must be strictly increasing");
    }
  }

  /// Contiguous range [first, first + count).
  static EntityIndexSet range(Index first, Index count) {
    std::vector<Index> ids(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) ids[static_cast<std::size_t>(k)] = first + k;
    return EntityIndexSet(std::move(ids));
  }

  const std::vector<Index>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  Index operator[](std::size_t k) const { return ids_[k]; }

  /// Local position of a global id, if present.
  std::optional<Index> position(Index id) const {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<Index>(it - ids_.begin());
  }
  bool contains(Index id) const { return position(id).has_value(); }

  friend bool operator==(const EntityIndexSet&, const EntityIndexSet&) = default;

 private:
  std::vector<Index> ids_;
};

inline EntityIndexSet set_union(const EntityIndexSet& a, const EntityIndexSet& b) {
  std::vector<Index> out;
  std::set_union(a.ids().begin(), a.ids().end(), b.ids().begin(), b.ids().end(), std::back_inserter(out));
  return EntityIndexSet(std::move(out));
}

inline EntityIndexSet set_intersection(const EntityIndexSet& a, const EntityIndexSet& b) {
  std::vector<Index> out;
  std::set_intersection(a.ids().begin(), a.ids().end(), b.ids().begin(), b.ids().end(),
                        std::back_inserter(out));
  return EntityIndexSet(std::move(out));
}

/// One source: entity sets, observed values, observation mask and sampling rate.
/// Unobserved cells hold 0 in `values` and are never read.
struct ObservedBlock {
  std::string block_id;
  EntityIndexSet row_entities;
  EntityIndexSet col_entities;
  Matrix values;
  Mask mask;
  std::optional<double> q;
  bool symmetric = true;
};

/// The unbiased estimate A = (observed values) / q, zero off the mask.
struct RescaledBlock {
  std::string block_id;
  EntityIndexSet row_entities;
  EntityIndexSet col_entities;
  Matrix a;
  Mask mask;
  double q = 1.0;
  bool symmetric = true;
};

/// Shared entities of two blocks plus each shared id's local position in both.
struct Overlap {
  std::string block_a;
  std::string block_b;
  EntityIndexSet shared_rows;
  EntityIndexSet shared_cols;
  std::vector<Index> local_rows_a, local_rows_b;
  std::vector<Index> local_cols_a, local_cols_b;
};

inline constexpr double kSymmetryTolerance = 1e-9;

/// Validates and assembles a block. Cells outside the mask are zeroed.
inline ObservedBlock make_observed_block(std::string block_id, EntityIndexSet rows,
                                         std::optional<EntityIndexSet> cols, Matrix values,
                                         Mask mask, std::optional<double> q = std::nullopt) {
  ObservedBlock b;
  b.block_id = std::move(block_id);
  b.symmetric = !cols.has_value();
  b.col_entities = cols ? std::move(*cols) : rows;
  b.row_entities = std::move(rows);
  if (b.row_entities.empty() || b.col_entities.empty())
    throw DataError("block '" + b.block_id + "' has an empty entity set");
  if (values.rows() != static_cast<Index>(b.row_entities.size()) ||
      values.cols() != static_cast<Index>(b.col_entities.size()))
    throw DataError("block '" + b.block_id + "': values are " + std::to_string(values.rows()) + "x" +
                    std::to_string(values.cols()) + " but entity sets declare " +
                    std::to_string(b.row_entities.size()) + "x" + std::to_string(b.col_entities.size()));
  if (mask.rows() != values.rows() || mask.cols() != values.cols())
    throw DataError("block '" + b.block_id + "': mask shape differs from values");
  if (q && !(*q > 0.0 && *q <= 1.0))
    throw DataError("block '" + b.block_id + "': q must lie in (0, 1]");
  values = mask.select(values, 0.0);
  if (b.symmetric) {
    const Index n = values.rows();
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) {
        if (mask(i, j) != mask(j, i))
          throw DataError("block '" + b.block_id + "' is declared symmetric but its mask is not");
        if (mask(i, j) && std::abs(values(i, j) - values(j, i)) > kSymmetryTolerance)
          throw DataError("block '" + b.block_id + "' is declared symmetric but values differ at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
      }
  }
  b.values = std::move(values);
  b.mask = std::move(mask);
  b.q = q;
  return b;
}

inline ObservedBlock make_observed_block(std::string block_id, EntityIndexSet rows, Matrix values,
                                         std::optional<double> q = std::nullopt) {
  Mask mask = Mask::Constant(values.rows(), values.cols(), true);
  return make_observed_block(std::move(block_id), std::move(rows), std::nullopt, std::move(values),
                             std::move(mask), q);
}

namespace detail {

inline EntityIndexSet parse_entities(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + " must be an array of integers");
  std::vector<Index> ids;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw DataError(what + " must be an array of integers");
    ids.push_back(v.get<Index>());
  }
  return EntityIndexSet(std::move(ids));
}

}  // namespace detail

/// Loads every block listed in a JSON manifest. Values paths are resolved
/// relative to the manifest's directory.
inline std::vector<ObservedBlock> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("blocks") || !doc["blocks"].is_array())
    throw DataError("manifest " + path.string() + " has no 'blocks' array");

  const auto base = path.parent_path();
  std::vector<ObservedBlock> blocks;
  std::set<std::string> ids;
  for (const auto& entry : doc["blocks"]) {
    if (!entry.contains("id") || !entry["id"].is_string())
      throw DataError("manifest entry without a string 'id'");
    const std::string id = entry["id"].get<std::string>();
    if (!ids.insert(id).second) throw DataError("duplicate block id '" + id + "'");
    if (!entry.contains("rows")) throw DataError("block '" + id + "' has no 'rows'");
    if (!entry.contains("values") || !entry["values"].is_string())
      throw DataError("block '" + id + "' has no 'values' path");
    auto rows = detail::parse_entities(entry["rows"], "block '" + id + "' rows");
    std::optional<EntityIndexSet> cols;
    if (entry.contains("cols")) cols = detail::parse_entities(entry["cols"], "block '" + id + "' cols");
    std::optional<double> q;
    if (entry.contains("q")) {
      if (!entry["q"].is_number()) throw DataError("block '" + id + "': q must be a number");
      q = entry["q"].get<double>();
    }
    auto table = csv::read_table(base / entry["values"].get<std::string>());
    blocks.push_back(make_observed_block(id, std::move(rows), std::move(cols), std::move(table.values),
                                         std::move(table.observed), q));
  }
  return blocks;
}

/// Fraction of observed cells over the full block (the whole square for
/// symmetric blocks, diagonal included).
inline double estimate_q(const ObservedBlock& block) {
  const auto observed = block.mask.count();
  if (observed == 0) throw DataError("block '" + block.block_id + "' has no observed cells");
  return static_cast<double>(observed) / static_cast<double>(block.mask.size());
}

inline RescaledBlock rescale(const ObservedBlock& block, double q) {
  if (!(q > 0.0)) throw DataError("block '" + block.block_id + "': sampling rate must be positive");
  RescaledBlock r;
  r.block_id = block.block_id;
  r.row_entities = block.row_entities;
  r.col_entities = block.col_entities;
  r.a = block.mask.select(block.values / q, 0.0);
  r.mask = block.mask;
  r.q = q;
  r.symmetric = block.symmetric;
  return r;
}

/// Uses the block's known q, or estimates it from the mask.
inline RescaledBlock rescale(const ObservedBlock& block) {
  return rescale(block, block.q ? *block.q : estimate_q(block));
}

namespace detail {

inline void intersect_positions(const EntityIndexSet& a, const EntityIndexSet& b, EntityIndexSet& shared,
                                std::vector<Index>& pos_a, std::vector<Index>& pos_b) {
  std::vector<Index> ids;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ids.push_back(a[i]);
      pos_a.push_back(static_cast<Index>(i));
      pos_b.push_back(static_cast<Index>(j));
      ++i;
      ++j;
    }
  }
  shared = EntityIndexSet(std::move(ids));
}

}  // namespace detail

template <typename BlockA, typename BlockB>
Overlap compute_overlap(const BlockA& a, const BlockB& b) {
  Overlap ov;
  ov.block_a = a.block_id;
  ov.block_b = b.block_id;
  detail::intersect_positions(a.row_entities, b.row_entities, ov.shared_rows, ov.local_rows_a, ov.local_rows_b);
  detail::intersect_positions(a.col_entities, b.col_entities, ov.shared_cols, ov.local_cols_a, ov.local_cols_b);
  return ov;
}

/// Pointwise mutual information log(P(x,y) / (P(x) P(y))). Zero joint
/// probabilities map to `zero_floor` when given, otherwise to the log ratio
/// of the smallest positive joint probability to that cell's marginal product.
inline Matrix cooccurrence_to_pmi(const Matrix& joint, const Vector& marginals,
                                  std::optional<double> zero_floor = std::nullopt) {
  if (joint.rows() != marginals.size() || joint.cols() != marginals.size())
    throw DataError("joint matrix and marginals disagree in size");
  if ((marginals.array() <= 0.0).any()) throw DataError("marginal probabilities must be positive");
  if ((joint.array() < 0.0).any()) throw DataError("joint probabilities must be nonnegative");
  double smallest_positive = 0.0;
  for (Index i = 0; i < joint.size(); ++i) {
    const double v = joint.data()[i];
    if (v > 0.0 && (smallest_positive == 0.0 || v < smallest_positive)) smallest_positive = v;
  }
  Matrix pmi(joint.rows(), joint.cols());
  for (Index j = 0; j < joint.cols(); ++j)
    for (Index i = 0; i < joint.rows(); ++i) {
      const double lm = std::log(marginals[i]) + std::log(marginals[j]);
      if (joint(i, j) > 0.0)
        pmi(i, j) = std::log(joint(i, j)) - lm;
      else if (zero_floor)
        pmi(i, j) = *zero_floor;
      else if (smallest_positive > 0.0)
        pmi(i, j) = std::log(smallest_positive) - lm;
      else
        throw DataError("joint matrix has no positive entry to derive a PMI floor from");
    }
  return pmi;
}

}  // namespace cmmi
