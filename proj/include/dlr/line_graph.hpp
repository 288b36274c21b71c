#pragma once

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlr/grid.hpp"
#include "dlr/mat.hpp"

namespace dlr {

/// Feature layout for line-graph nodes: the two endpoint bus feature vectors
/// (endpoints ordered by bus id ascending) followed by the line's own
/// features. Every line connects exactly two buses, so the total width is
/// the same for every node.
struct EdgeFeatureSchema {
  int node_feature_dim = 0;  // n_v
  int edge_feature_dim = 0;  // n_e
  int total_dim() const { return 2 * node_feature_dim + edge_feature_dim; }
};

/// The line graph L(G) of a grid: one node per line, plus the single-hop and
/// exact-distance-2 adjacency matrices and the normalized double-hop mixing
/// operator used by the model.
struct LineGraphIndex {
  int node_count = 0;
  std::vector<LineId> node_origin;  // line id per line-graph node, grid line order
  Mat adj1;                         // (i,j)=1 iff lines share exactly one bus
  Mat adj2;                         // (i,j)=1 iff BFS distance in L(G) is exactly 2
  Mat a_tilde;                      // D^{-1/2} (adj2 + I) D^{-1/2}
};

/// Symmetric normalization of an augmented adjacency: with A~ = A + I and
/// D = diag(rowsum(A~)), returns D^{-1/2} A~ D^{-1/2}. Rows of isolated
/// nodes reduce to identity rows.
inline Mat normalize_operator(const Mat& adj) {
  if (adj.rows != adj.cols) throw std::invalid_argument("normalize_operator: square matrix required");
  const int n = adj.rows;
  for (int i = 0; i < n; ++i) {
    if (adj(i, i) != 0.0) throw std::invalid_argument("normalize_operator: nonzero diagonal");
    for (int j = 0; j < n; ++j) {
      const double x = adj(i, j);
      if (x != 0.0 && x != 1.0) throw std::invalid_argument("normalize_operator: matrix must be binary");
      if (x != adj(j, i)) throw std::invalid_argument("normalize_operator: matrix must be symmetric");
    }
  }
  std::vector<double> dinv_sqrt(n);
  for (int i = 0; i < n; ++i) {
    double deg = 1.0;  // self-loop from + I
    for (int j = 0; j < n; ++j) deg += adj(i, j);
    dinv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Mat out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double aug = adj(i, j) + (i == j ? 1.0 : 0.0);
      out(i, j) = dinv_sqrt[i] * aug * dinv_sqrt[j];
    }
  return out;
}

/// Exact-distance-2 adjacency of a line graph: (i,j)=1 iff the BFS distance
/// between nodes i and j under adj1 is exactly 2. Distance-1 pairs are
/// excluded, which is what removes duplicated bus features from the
/// aggregation neighborhood.
inline Mat double_hop_adjacency(const LineGraphIndex& lg) {
  const int n = lg.node_count;
  Mat adj2(n, n);
  std::vector<int> dist(n);
  std::deque<int> queue;
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    queue.clear();
    queue.push_back(s);
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      if (dist[u] >= 2) continue;
      for (int w = 0; w < n; ++w) {
        if (lg.adj1(u, w) != 0.0 && dist[w] < 0) {
          dist[w] = dist[u] + 1;
          queue.push_back(w);
        }
      }
    }
    for (int j = 0; j < n; ++j)
      if (dist[j] == 2) adj2(s, j) = 1.0;
  }
  return adj2;
}

/// Converts a grid to its line graph. Node order follows grid line order;
/// two line-graph nodes are adjacent iff the underlying lines share exactly
/// one bus. Grids with self-loops or parallel lines are rejected.
inline LineGraphIndex to_line_graph(const Grid& grid) {
  grid.validate();
  LineGraphIndex lg;
  lg.node_count = static_cast<int>(grid.lines.size());
  lg.adj1 = Mat(lg.node_count, lg.node_count);
  for (const auto& l : grid.lines) lg.node_origin.push_back(l.id);
  for (int i = 0; i < lg.node_count; ++i) {
    const Line& a = grid.lines[i];
    for (int j = i + 1; j < lg.node_count; ++j) {
      const Line& b = grid.lines[j];
      int shared = 0;
      if (a.from == b.from || a.from == b.to) ++shared;
      if (a.to == b.from || a.to == b.to) ++shared;
      if (shared == 1) {
        lg.adj1(i, j) = 1.0;
        lg.adj1(j, i) = 1.0;
      }
      // shared == 2 cannot happen: validate() forbids parallel lines
    }
  }
  lg.adj2 = double_hop_adjacency(lg);
  lg.a_tilde = normalize_operator(lg.adj2);
  return lg;
}

/// Single-hop normalized operator D^{-1/2}(adj1 + I)D^{-1/2}, used by the
/// stacked single-hop model variant.
inline Mat single_hop_operator(const LineGraphIndex& lg) { return normalize_operator(lg.adj1); }

/// Stacks per-line feature rows for one time step:
///   row(line) = f_V(first endpoint) || f_V(second endpoint) || f_E(line)
/// with endpoints ordered by bus id ascending. `node_feats` rows follow grid
/// bus order, `edge_feats` rows follow grid line order.
inline Mat assemble_line_features(const Grid& grid, const EdgeFeatureSchema& schema, const Mat& node_feats,
                                  const Mat& edge_feats) {
  const int nv = schema.node_feature_dim;
  const int ne = schema.edge_feature_dim;
  if (node_feats.rows != static_cast<int>(grid.buses.size()) || node_feats.cols != nv)
    throw std::invalid_argument("assemble_line_features: node feature matrix " + shape_str(node_feats) +
                                " does not match bus count/dim");
  if (edge_feats.rows != static_cast<int>(grid.lines.size()) || edge_feats.cols != ne)
    throw std::invalid_argument("assemble_line_features: edge feature matrix " + shape_str(edge_feats) +
                                " does not match line count/dim");
  Mat x(static_cast<int>(grid.lines.size()), schema.total_dim());
  for (size_t e = 0; e < grid.lines.size(); ++e) {
    auto [a, b] = grid.ordered_endpoints(grid.lines[e]);
    const int ia = grid.bus_index(a);
    const int ib = grid.bus_index(b);
    double* out = x.row(static_cast<int>(e));
    for (int k = 0; k < nv; ++k) out[k] = node_feats(ia, k);
    for (int k = 0; k < nv; ++k) out[nv + k] = node_feats(ib, k);
    for (int k = 0; k < ne; ++k) out[2 * nv + k] = edge_feats(static_cast<int>(e), k);
  }
  return x;
}

}  // namespace dlr
