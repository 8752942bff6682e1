#pragma once

#include "gdm/graph.hpp"
#include "gdm/rng.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdm {

// Small deterministic graph families. Node 0 is the hub where one exists.

inline Graph star_graph(int k) {
  Graph g(k);
  for (int i = 1; i < k; ++i) g.add_edge(0, i);
  return g;
}

inline Graph wheel_graph(int k) {
  if (k < 4) throw std::invalid_argument("wheel_graph: need at least 4 nodes");
  Graph g(k);
  for (int i = 1; i < k; ++i) {
    g.add_edge(0, i);
    g.add_edge(i, i == k - 1 ? 1 : i + 1);
  }
  return g;
}

inline Graph grid_graph(int rows, int cols) {
  Graph g(rows * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int v = r * cols + c;
      if (c + 1 < cols) g.add_edge(v, v + 1);
      if (r + 1 < rows) g.add_edge(v, v + cols);
    }
  return g;
}

/// A clique on the first `clique` nodes followed by a path of `tail` nodes
/// hanging off the last clique node.
inline Graph lollipop_graph(int clique, int tail) {
  Graph g(clique + tail);
  for (int i = 0; i < clique; ++i)
    for (int j = i + 1; j < clique; ++j) g.add_edge(i, j);
  for (int t = 0; t < tail; ++t) g.add_edge(clique - 1 + t, clique + t);
  return g;
}

enum class Attachment { preferential, inverse_degree };

/// Barabasi-Albert growth with one edge per new node, starting from a single
/// edge. `preferential` picks targets with probability proportional to degree,
/// `inverse_degree` proportional to 1/degree.
inline Graph ba_tree(int n, Attachment rule, Rng& rng) {
  if (n < 2) throw std::invalid_argument("ba_tree: need at least 2 nodes");
  Graph g(n);
  std::vector<double> degree(static_cast<std::size_t>(n), 0.0);
  g.add_edge(0, 1);
  degree[0] = degree[1] = 1.0;
  std::vector<double> weights;
  for (int v = 2; v < n; ++v) {
    weights.resize(static_cast<std::size_t>(v));
    for (int u = 0; u < v; ++u) {
      const double d = degree[static_cast<std::size_t>(u)];
      weights[static_cast<std::size_t>(u)] = rule == Attachment::preferential ? d : 1.0 / d;
    }
    const int u = static_cast<int>(rng.weighted(weights));
    g.add_edge(u, v);
    degree[static_cast<std::size_t>(u)] += 1.0;
    degree[static_cast<std::size_t>(v)] += 1.0;
  }
  return g;
}

/// Appends a copy of `motif` to `base` and joins motif node 0 to a random base
/// node. The motif occupies the last motif.num_nodes() node indices.
inline Graph attach_motif(const Graph& base, const Graph& motif, Rng& rng) {
  const int nb = base.num_nodes();
  const int nm = motif.num_nodes();
  Graph g(nb + nm, base.label);
  g.adjacency.topLeftCorner(nb, nb) = base.adjacency;
  g.adjacency.bottomRightCorner(nm, nm) = motif.adjacency;
  g.add_edge(static_cast<int>(rng.below(static_cast<std::size_t>(nb))), nb);
  return g;
}

/// 4-cycle 0-1-2-3 with a roof apex 4 over the edge 0-1.
inline Graph house_motif() {
  Graph g(5);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 3);
  g.add_edge(3, 0);
  g.add_edge(0, 4);
  g.add_edge(1, 4);
  return g;
}

inline Graph cycle_graph(int k) {
  Graph g(k);
  for (int i = 0; i < k; ++i) g.add_edge(i, (i + 1) % k);
  return g;
}

/// Assigns one-hot index features padded to the dataset's maximum node count
/// and builds the class index.
inline void finish_featureless(GraphDataset& ds) {
  ds.feature_dim = ds.max_nodes();
  ds.semantic_features = false;
  for (auto& g : ds.graphs) g.features = surrogate_index_features(g.num_nodes(), ds.feature_dim);
  ds.split.assign(ds.graphs.size(), Split::train);
  ds.rebuild_class_index();
}

inline constexpr int kBaMotifBaseNodes = 20;
inline constexpr int kBaLrpNodes = 20;

/// Class 0: BA base with a house motif, class 1: BA base with a 5-cycle.
inline GraphDataset gen_ba_motif(int n_graphs, std::uint64_t seed) {
  if (n_graphs <= 0 || n_graphs % 2 != 0)
    throw std::invalid_argument("gen_ba_motif: n_graphs must be positive and even, got " +
                                std::to_string(n_graphs));
  Rng rng(derive_seed(seed, "ba-motif"));
  GraphDataset ds;
  ds.name = "ba-motif";
  ds.num_classes = 2;
  const Graph house = house_motif();
  const Graph cycle = cycle_graph(5);
  for (int i = 0; i < n_graphs; ++i) {
    const int label = i < n_graphs / 2 ? 0 : 1;
    Graph base = ba_tree(kBaMotifBaseNodes, Attachment::preferential, rng);
    Graph g = attach_motif(base, label == 0 ? house : cycle, rng);
    g.label = label;
    ds.graphs.push_back(std::move(g));
  }
  finish_featureless(ds);
  return ds;
}

/// Class 0: degree-even growth (attachment weight 1/degree), class 1:
/// degree-concentrated growth (attachment weight degree).
inline GraphDataset gen_ba_lrp(int n_graphs, std::uint64_t seed) {
  if (n_graphs <= 0 || n_graphs % 2 != 0)
    throw std::invalid_argument("gen_ba_lrp: n_graphs must be positive and even, got " +
                                std::to_string(n_graphs));
  Rng rng(derive_seed(seed, "ba-lrp"));
  GraphDataset ds;
  ds.name = "ba-lrp";
  ds.num_classes = 2;
  for (int i = 0; i < n_graphs; ++i) {
    const int label = i < n_graphs / 2 ? 0 : 1;
    Graph g = ba_tree(kBaLrpNodes, label == 0 ? Attachment::inverse_degree : Attachment::preferential,
                      rng);
    g.label = label;
    ds.graphs.push_back(std::move(g));
  }
  finish_featureless(ds);
  return ds;
}

struct ShapeOptions {
  int min_nodes = 20;
  int max_nodes = 80;
};

/// Four classes in order Lollipop, Wheel, Grid, Star, with node counts drawn
/// uniformly from [min_nodes, max_nodes]. Grids use the closest r x c shape.
inline GraphDataset gen_shape(int n_graphs, std::uint64_t seed, ShapeOptions opts = {}) {
  if (n_graphs <= 0 || n_graphs % 4 != 0)
    throw std::invalid_argument("gen_shape: n_graphs must be a positive multiple of 4, got " +
                                std::to_string(n_graphs));
  if (opts.min_nodes < 4 || opts.max_nodes < opts.min_nodes)
    throw std::invalid_argument("gen_shape: invalid node range");
  Rng rng(derive_seed(seed, "shape"));
  GraphDataset ds;
  ds.name = "shape";
  ds.num_classes = 4;
  const int per_class = n_graphs / 4;
  for (int label = 0; label < 4; ++label) {
    for (int i = 0; i < per_class; ++i) {
      const int k = rng.range(opts.min_nodes, opts.max_nodes);
      Graph g;
      switch (label) {
        case 0: {
          const int clique = k / 2;
          g = lollipop_graph(clique, k - clique);
          break;
        }
        case 1:
          g = wheel_graph(k);
          break;
        case 2: {
          const int rows = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(k)))));
          const int cols = std::max(2, static_cast<int>(std::lround(static_cast<double>(k) / rows)));
          g = grid_graph(rows, cols);
          break;
        }
        default:
          g = star_graph(k);
      }
      g.label = label;
      ds.graphs.push_back(std::move(g));
    }
  }
  finish_featureless(ds);
  return ds;
}

inline const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names{"ba-motif", "ba-lrp", "shape"};
  return names;
}

/// Dispatch by generator name; throws std::invalid_argument listing the valid
/// names for anything else.
inline GraphDataset generate_dataset(const std::string& name, int n_graphs, std::uint64_t seed) {
  if (name == "ba-motif") return gen_ba_motif(n_graphs, seed);
  if (name == "ba-lrp") return gen_ba_lrp(n_graphs, seed);
  if (name == "shape") return gen_shape(n_graphs, seed);
  std::string valid;
  for (const auto& n : generator_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown dataset '" + name + "' (valid: " + valid + ")");
}

/// Stratified split: per class, shuffle and keep floor(count * train_frac)
/// graphs for training (at least one, at most count - 1); the rest is test.
inline GraphDataset split_dataset(GraphDataset ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw std::invalid_argument("split_dataset: train_frac must lie in (0, 1)");
  if (ds.class_index.size() != static_cast<std::size_t>(ds.num_classes)) ds.rebuild_class_index();
  Rng rng(derive_seed(seed, "split"));
  ds.split.assign(ds.graphs.size(), Split::test);
  for (int c = 0; c < ds.num_classes; ++c) {
    std::vector<std::size_t> members = ds.class_index[static_cast<std::size_t>(c)];
    if (members.size() < 2)
      throw std::invalid_argument("split_dataset: class " + std::to_string(c) + " has " +
                                  std::to_string(members.size()) + " graph(s), need at least 2");
    rng.shuffle(members);
    auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * train_frac + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    for (std::size_t i = 0; i < n_train; ++i) ds.split[members[i]] = Split::train;
  }
  return ds;
}

}  // namespace gdm
