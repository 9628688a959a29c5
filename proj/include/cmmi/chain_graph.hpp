#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmmi/align.hpp"
#include "cmmi/block_model.hpp"
#include "cmmi/core.hpp"
#include "cmmi/integrate.hpp"
#include "cmmi/spectral_embed.hpp"

namespace cmmi {

/// Vertices are indexed in input order; every "smallest id" tie-break below
/// refers to that index.
struct GraphVertex {
  std::string block_id;
  EntityIndexSet row_entities;
  EntityIndexSet col_entities;
  double c = 0.0;
};

struct GraphEdge {
  Index i = 0;  // i < j
  Index j = 0;
  Index overlap_size = 0;
  double weight = 0.0;
};

struct OverlapGraph {
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;
  Index threshold = 1;
  bool asymmetric = false;

  Index size() const noexcept { return static_cast<Index>(vertices.size()); }

  /// Neighbour lists in ascending vertex order.
  std::vector<std::vector<Index>> adjacency() const {
    std::vector<std::vector<Index>> adj(vertices.size());
    for (const auto& e : edges) {
      adj[static_cast<std::size_t>(e.i)].push_back(e.j);
      adj[static_cast<std::size_t>(e.j)].push_back(e.i);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }

  std::optional<Index> find(const std::string& block_id) const {
    for (std::size_t k = 0; k < vertices.size(); ++k)
      if (vertices[k].block_id == block_id) return static_cast<Index>(k);
    return std::nullopt;
  }
};

/// Blocks are adjacent when they share at least `threshold` row entities (or,
/// for rectangular blocks, at least `threshold` rows or columns). Edge weight
/// is the sum of the endpoint residual scores; blocks without a score get 0.
template <typename Block>
OverlapGraph build_graph(std::span<const Block> blocks, std::span<const ResidualScore> scores, Index threshold) {
  if (threshold < 1) throw DataError("overlap threshold must be at least 1");
  OverlapGraph g;
  g.threshold = threshold;
  std::map<std::string, double> score_of;
  for (const auto& s : scores) score_of[s.block_id] = s.c;
  for (const auto& b : blocks) {
    g.asymmetric = g.asymmetric || !b.symmetric;
    const auto it = score_of.find(b.block_id);
    g.vertices.push_back({b.block_id, b.row_entities, b.col_entities, it == score_of.end() ? 0.0 : it->second});
  }
  for (std::size_t i = 0; i < g.vertices.size(); ++i)
    for (std::size_t j = i + 1; j < g.vertices.size(); ++j) {
      const auto& a = g.vertices[i];
      const auto& b = g.vertices[j];
      const Index rows = static_cast<Index>(set_intersection(a.row_entities, b.row_entities).size());
      Index size = rows >= threshold ? rows : 0;
      if (g.asymmetric) {
        const Index cols = static_cast<Index>(set_intersection(a.col_entities, b.col_entities).size());
        if (cols >= threshold) size = std::max(size, cols);
      }
      if (size >= threshold)
        g.edges.push_back({static_cast<Index>(i), static_cast<Index>(j), size, a.c + b.c});
    }
  return g;
}

template <typename Block>
OverlapGraph build_graph(const std::vector<Block>& blocks, std::span<const ResidualScore> scores,
                         Index threshold) {
  return build_graph(std::span<const Block>(blocks), scores, threshold);
}

/// Connected component id of every vertex (ids numbered by lowest member).
inline std::vector<Index> connected_components(const OverlapGraph& g) {
  const auto adj = g.adjacency();
  std::vector<Index> comp(g.vertices.size(), -1);
  Index next = 0;
  for (std::size_t start = 0; start < comp.size(); ++start) {
    if (comp[start] >= 0) continue;
    std::vector<Index> stack{static_cast<Index>(start)};
    comp[start] = next;
    while (!stack.empty()) {
      const Index v = stack.back();
      stack.pop_back();
      for (Index w : adj[static_cast<std::size_t>(v)])
        if (comp[static_cast<std::size_t>(w)] < 0) {
          comp[static_cast<std::size_t>(w)] = next;
          stack.push_back(w);
        }
    }
    ++next;
  }
  return comp;
}

/// Entities reachable through each connected component of the overlap graph.
struct RecoverabilityMask {
  struct Component {
    std::vector<Index> vertices;
    EntityIndexSet row_entities;
    EntityIndexSet col_entities;
  };
  std::vector<Component> components;

  bool entry(Index s, Index t) const {
    for (const auto& c : components)
      if (c.row_entities.contains(s) && c.col_entities.contains(t)) return true;
    return false;
  }

  /// Component holding row entity s, if any (the first, when several do).
  std::optional<Index> component_of(Index s) const {
    for (std::size_t f = 0; f < components.size(); ++f)
      if (components[f].row_entities.contains(s)) return static_cast<Index>(f);
    return std::nullopt;
  }
};

inline RecoverabilityMask recoverability(const OverlapGraph& g) {
  const auto comp = connected_components(g);
  const Index count = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  RecoverabilityMask mask;
  mask.components.resize(static_cast<std::size_t>(count));
  for (std::size_t v = 0; v < comp.size(); ++v) {
    auto& c = mask.components[static_cast<std::size_t>(comp[v])];
    c.vertices.push_back(static_cast<Index>(v));
    c.row_entities = set_union(c.row_entities, g.vertices[v].row_entities);
    c.col_entities = set_union(c.col_entities, g.vertices[v].col_entities);
  }
  return mask;
}

/// Shortest path from `from` to `to`, exploring neighbours in ascending order.
inline std::optional<std::vector<Index>> shortest_path(const std::vector<std::vector<Index>>& adj, Index from,
                                                       Index to) {
  std::vector<Index> parent(adj.size(), -1);
  std::vector<bool> seen(adj.size(), false);
  std::deque<Index> queue{from};
  seen[static_cast<std::size_t>(from)] = true;
  while (!queue.empty()) {
    const Index v = queue.front();
    queue.pop_front();
    if (v == to) break;
    for (Index w : adj[static_cast<std::size_t>(v)])
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = true;
        parent[static_cast<std::size_t>(w)] = v;
        queue.push_back(w);
      }
  }
  if (!seen[static_cast<std::size_t>(to)]) return std::nullopt;
  std::vector<Index> path{to};
  while (path.back() != from) path.push_back(parent[static_cast<std::size_t>(path.back())]);
  std::reverse(path.begin(), path.end());
  return path;
}

/// Chain for entry (s, t): endpoints minimize c_i + c_j over blocks holding s
/// and t that lie in the same component; the interior is a BFS shortest path.
/// Returns vertex indices.
inline std::vector<Index> select_chain_vertices(const OverlapGraph& g, Index s, Index t) {
  const auto comp = connected_components(g);
  std::vector<Index> holders_s, holders_t;
  for (std::size_t v = 0; v < g.vertices.size(); ++v) {
    if (g.vertices[v].row_entities.contains(s)) holders_s.push_back(static_cast<Index>(v));
    if (g.vertices[v].col_entities.contains(t)) holders_t.push_back(static_cast<Index>(v));
  }
  std::optional<std::pair<Index, Index>> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (Index i : holders_s)
    for (Index j : holders_t) {
      if (comp[static_cast<std::size_t>(i)] != comp[static_cast<std::size_t>(j)]) continue;
      const double cost = g.vertices[static_cast<std::size_t>(i)].c + g.vertices[static_cast<std::size_t>(j)].c;
      if (cost < best_cost) {
        best_cost = cost;
        best = {i, j};
      }
    }
  if (!best)
    throw DataError("entry (" + std::to_string(s) + "," + std::to_string(t) +
                    ") is not recoverable: no connected pair of blocks holds both entities");
  return *shortest_path(g.adjacency(), best->first, best->second);
}

inline std::vector<std::string> select_chain(const OverlapGraph& g, Index s, Index t) {
  std::vector<std::string> ids;
  for (Index v : select_chain_vertices(g, s, t)) ids.push_back(g.vertices[static_cast<std::size_t>(v)].block_id);
  return ids;
}

/// Kruskal minimum spanning forest; edges sorted by (weight, i, j).
inline std::vector<GraphEdge> minimum_spanning_forest(const OverlapGraph& g) {
  std::vector<GraphEdge> edges = g.edges;
  std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
    if (a.weight != b.weight) return a.weight < b.weight;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<Index> parent(g.vertices.size());
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  };
  std::vector<GraphEdge> tree;
  for (const auto& e : edges) {
    const Index a = find(e.i);
    const Index b = find(e.j);
    if (a == b) continue;
    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    tree.push_back(e);
  }
  return tree;
}

/// Whole-matrix estimate from aligning every block to one root frame per
/// component along its minimum spanning tree.
struct HolisticResult {
  EntityIndexSet row_entities;  // union over all blocks
  EntityIndexSet col_entities;
  Matrix x_tilde;                // rows follow row_entities
  std::optional<Matrix> y_tilde; // rectangular mode
  Matrix estimate;
  Mask recoverable;              // false where no component covers the entry
  std::vector<GraphEdge> tree;
  std::vector<Index> roots;      // one per component
};

/// `blocks` must be in the graph's vertex order.
inline HolisticResult holistic_recover(const OverlapGraph& g, std::span<const RescaledBlock> blocks,
                                       const EmbedSpec& spec, Diagnostics* diag = nullptr) {
  if (g.vertices.empty()) throw DataError("holistic recovery on an empty graph");
  if (blocks.size() != g.vertices.size()) throw DataError("holistic recovery: blocks do not match graph");
  for (std::size_t v = 0; v < blocks.size(); ++v)
    if (blocks[v].block_id != g.vertices[v].block_id) throw DataError("holistic recovery: block order differs");

  const std::size_t k = blocks.size();
  const Index d = spec.d();
  const bool rect = spec.mode == EmbedMode::asymmetric;
  std::vector<Embedding> emb;
  emb.reserve(k);
  for (const auto& b : blocks) emb.push_back(embed(b, spec, diag));

  HolisticResult out;
  out.tree = minimum_spanning_forest(g);
  std::vector<std::vector<Index>> tree_adj(k);
  for (const auto& e : out.tree) {
    tree_adj[static_cast<std::size_t>(e.i)].push_back(e.j);
    tree_adj[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  for (auto& a : tree_adj) std::sort(a.begin(), a.end());

  // Root each component at its lowest-c vertex and carry every block into the
  // root frame: X_child W(child, parent) W(parent, ...) ... ~ X_root.
  const auto comp = connected_components(g);
  const Index n_comp = *std::max_element(comp.begin(), comp.end()) + 1;
  out.roots.assign(static_cast<std::size_t>(n_comp), -1);
  for (std::size_t v = 0; v < k; ++v) {
    Index& r = out.roots[static_cast<std::size_t>(comp[v])];
    if (r < 0 || g.vertices[v].c < g.vertices[static_cast<std::size_t>(r)].c) r = static_cast<Index>(v);
  }
  std::vector<Matrix> to_root(k);
  for (Index root : out.roots) {
    to_root[static_cast<std::size_t>(root)] = Matrix::Identity(d, d);
    std::deque<Index> queue{root};
    std::vector<bool> seen(k, false);
    seen[static_cast<std::size_t>(root)] = true;
    while (!queue.empty()) {
      const Index p = queue.front();
      queue.pop_front();
      for (Index c : tree_adj[static_cast<std::size_t>(p)]) {
        if (seen[static_cast<std::size_t>(c)]) continue;
        seen[static_cast<std::size_t>(c)] = true;
        const auto& bc = blocks[static_cast<std::size_t>(c)];
        const auto& bp = blocks[static_cast<std::size_t>(p)];
        const AlignmentMap link = align_pair(emb[static_cast<std::size_t>(c)], emb[static_cast<std::size_t>(p)],
                                             compute_overlap(bc, bp), spec.mode, diag);
        to_root[static_cast<std::size_t>(c)] = link.w * to_root[static_cast<std::size_t>(p)];
        queue.push_back(c);
      }
    }
  }

  for (const auto& b : blocks) {
    out.row_entities = set_union(out.row_entities, b.row_entities);
    out.col_entities = set_union(out.col_entities, b.col_entities);
  }
  const Index nr = static_cast<Index>(out.row_entities.size());
  const Index nc = static_cast<Index>(out.col_entities.size());
  out.x_tilde = Matrix::Zero(nr, d);
  if (rect) out.y_tilde = Matrix::Zero(nc, d);
  std::vector<Index> row_comp(static_cast<std::size_t>(nr), -1);
  std::vector<Index> col_comp(static_cast<std::size_t>(nc), -1);

  // Highest residual first, so the cleanest block writes last and wins.
  std::vector<Index> order(k);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ca = g.vertices[static_cast<std::size_t>(a)].c;
    const double cb = g.vertices[static_cast<std::size_t>(b)].c;
    return ca != cb ? ca > cb : a > b;
  });
  for (Index v : order) {
    const auto& b = blocks[static_cast<std::size_t>(v)];
    const auto& e = emb[static_cast<std::size_t>(v)];
    const Matrix& w = to_root[static_cast<std::size_t>(v)];
    const Matrix xt = e.x * w;
    for (std::size_t r = 0; r < b.row_entities.size(); ++r) {
      const Index pos = *out.row_entities.position(b.row_entities[r]);
      out.x_tilde.row(pos) = xt.row(static_cast<Index>(r));
      row_comp[static_cast<std::size_t>(pos)] = comp[static_cast<std::size_t>(v)];
    }
    if (rect) {
      const Matrix yt = *e.y * w.transpose().inverse();
      for (std::size_t r = 0; r < b.col_entities.size(); ++r) {
        const Index pos = *out.col_entities.position(b.col_entities[r]);
        out.y_tilde->row(pos) = yt.row(static_cast<Index>(r));
        col_comp[static_cast<std::size_t>(pos)] = comp[static_cast<std::size_t>(v)];
      }
    }
  }
  if (!rect) col_comp = row_comp;

  switch (spec.mode) {
    case EmbedMode::psd: out.estimate = out.x_tilde * out.x_tilde.transpose(); break;
    case EmbedMode::indefinite:
      out.estimate = out.x_tilde * signature_core(spec.signature) * out.x_tilde.transpose();
      break;
    case EmbedMode::asymmetric: out.estimate = out.x_tilde * out.y_tilde->transpose(); break;
  }
  out.recoverable.resize(nr, nc);
  for (Index i = 0; i < nr; ++i)
    for (Index j = 0; j < nc; ++j)
      out.recoverable(i, j) = row_comp[static_cast<std::size_t>(i)] >= 0 &&
                              row_comp[static_cast<std::size_t>(i)] == col_comp[static_cast<std::size_t>(j)];
  return out;
}

}  // namespace cmmi
