#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gdm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// One labeled undirected graph: binary symmetric adjacency with zero
/// diagonal, an n x d feature matrix and a class label.
struct Graph {
  Matrix adjacency;
  Matrix features;
  int label = 0;

  Graph() = default;
  explicit Graph(int n, int label_ = 0) : adjacency(Matrix::Zero(n, n)), label(label_) {}

  int num_nodes() const { return static_cast<int>(adjacency.rows()); }

  void add_edge(int i, int j) {
    if (i == j) throw std::invalid_argument("Graph::add_edge: self-loop");
    adjacency(i, j) = 1.0;
    adjacency(j, i) = 1.0;
  }

  bool has_edge(int i, int j) const { return adjacency(i, j) != 0.0; }

  /// Undirected edge count.
  std::size_t num_edges() const {
    std::size_t count = 0;
    for (Index i = 0; i < adjacency.rows(); ++i)
      for (Index j = i + 1; j < adjacency.cols(); ++j)
        if (adjacency(i, j) != 0.0) ++count;
    return count;
  }

  /// Edges as (i, j) with i < j, in row-major order.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < num_nodes(); ++i)
      for (int j = i + 1; j < num_nodes(); ++j)
        if (adjacency(i, j) != 0.0) out.emplace_back(i, j);
    return out;
  }

  std::vector<int> degrees() const {
    std::vector<int> deg(static_cast<std::size_t>(num_nodes()), 0);
    for (int i = 0; i < num_nodes(); ++i)
      for (int j = 0; j < num_nodes(); ++j)
        if (adjacency(i, j) != 0.0) ++deg[static_cast<std::size_t>(i)];
    return deg;
  }
};

/// Throws std::invalid_argument unless `g` is symmetric, binary, zero-diagonal
/// and carries `feature_dim` feature columns (when feature_dim >= 0).
inline void check_graph(const Graph& g, int feature_dim = -1) {
  const Index n = g.adjacency.rows();
  if (n <= 0 || g.adjacency.cols() != n)
    throw std::invalid_argument("graph: adjacency must be square and non-empty");
  for (Index i = 0; i < n; ++i) {
    if (g.adjacency(i, i) != 0.0) throw std::invalid_argument("graph: non-zero diagonal");
    for (Index j = 0; j < n; ++j) {
      const double a = g.adjacency(i, j);
      if (a != 0.0 && a != 1.0) throw std::invalid_argument("graph: adjacency not binary");
      if (a != g.adjacency(j, i)) throw std::invalid_argument("graph: adjacency not symmetric");
    }
  }
  if (g.features.rows() != n)
    throw std::invalid_argument("graph: feature row count " + std::to_string(g.features.rows()) +
                                " != node count " + std::to_string(n));
  if (feature_dim >= 0 && g.features.cols() != feature_dim)
    throw std::invalid_argument("graph: feature dim " + std::to_string(g.features.cols()) +
                                " != dataset dim " + std::to_string(feature_dim));
}

/// One-hot node-index features: row i is e_i, padded to width d_max.
inline Matrix surrogate_index_features(int n, int d_max) {
  if (n <= 0) throw std::invalid_argument("surrogate_index_features: n must be positive");
  if (n > d_max)
    throw std::invalid_argument("surrogate_index_features: n=" + std::to_string(n) +
                                " exceeds d_max=" + std::to_string(d_max));
  Matrix x = Matrix::Zero(n, d_max);
  for (int i = 0; i < n; ++i) x(i, i) = 1.0;
  return x;
}

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I. Works for relaxed
/// (fractional) adjacency as long as entries are non-negative.
inline Matrix normalize_adjacency(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("normalize_adjacency: matrix not square");
  Matrix s = a;
  s.diagonal().array() += 1.0;
  const Eigen::VectorXd r = s.rowwise().sum().array().rsqrt();
  return r.asDiagonal() * s * r.asDiagonal();
}

enum class Split : unsigned char { train, test };

/// A collection of graphs sharing one feature dimension. Featureless
/// benchmarks carry one-hot index features; `semantic_features` is true only
/// when the features come from the data (e.g. atom types).
struct GraphDataset {
  std::string name;
  std::vector<Graph> graphs;
  int num_classes = 0;
  int feature_dim = 0;
  bool semantic_features = false;
  std::vector<std::string> node_type_names;
  std::vector<std::vector<std::size_t>> class_index;
  std::vector<Split> split;

  std::size_t size() const { return graphs.size(); }

  void rebuild_class_index() {
    class_index.assign(static_cast<std::size_t>(num_classes), {});
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      const int y = graphs[i].label;
      if (y < 0 || y >= num_classes)
        throw std::invalid_argument("dataset " + name + ": label " + std::to_string(y) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
      class_index[static_cast<std::size_t>(y)].push_back(i);
    }
    if (split.size() != graphs.size()) split.assign(graphs.size(), Split::train);
  }

  /// Indices of graphs of class `c` in split `s`, ascending.
  std::vector<std::size_t> indices(Split s, int c) const {
    std::vector<std::size_t> out;
    for (std::size_t i : class_index.at(static_cast<std::size_t>(c)))
      if (split[i] == s) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < graphs.size(); ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  std::vector<const Graph*> view(Split s) const {
    std::vector<const Graph*> out;
    for (std::size_t i : indices(s)) out.push_back(&graphs[i]);
    return out;
  }

  int max_nodes() const {
    int m = 0;
    for (const auto& g : graphs) m = std::max(m, g.num_nodes());
    return m;
  }

  double mean_nodes() const {
    double total = 0.0;
    for (const auto& g : graphs) total += g.num_nodes();
    return graphs.empty() ? 0.0 : total / static_cast<double>(graphs.size());
  }

  /// Mean undirected edge count.
  double mean_edges() const {
    double total = 0.0;
    for (const auto& g : graphs) total += static_cast<double>(g.num_edges());
    return graphs.empty() ? 0.0 : total / static_cast<double>(graphs.size());
  }
};

inline void check_dataset(const GraphDataset& ds) {
  if (ds.num_classes <= 0) throw std::invalid_argument("dataset " + ds.name + ": no classes");
  std::size_t covered = 0;
  for (const auto& members : ds.class_index) covered += members.size();
  if (ds.class_index.size() != static_cast<std::size_t>(ds.num_classes) || covered != ds.graphs.size())
    throw std::invalid_argument("dataset " + ds.name + ": class index out of date");
  for (const auto& g : ds.graphs) {
    check_graph(g, ds.feature_dim);
    if (g.label < 0 || g.label >= ds.num_classes)
      throw std::invalid_argument("dataset " + ds.name + ": label out of range");
  }
}

inline std::vector<const Graph*> view_of(const std::vector<Graph>& graphs) {
  std::vector<const Graph*> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(&g);
  return out;
}

}  // namespace gdm
