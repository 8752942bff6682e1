#include "gdm/datasets.hpp"
#include "gdm/errors.hpp"
#include "gdm/tu_format.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace gdm;
using Catch::Approx;

namespace {

/// Brute-force isomorphism test between the subgraph induced by `nodes` and `pattern`.
bool induced_isomorphic(const Graph& g, const std::vector<int>& nodes, const Graph& pattern) {
  const int k = pattern.num_nodes();
  if (static_cast<int>(nodes.size()) != k) return false;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    bool ok = true;
    for (int a = 0; a < k && ok; ++a)
      for (int b = a + 1; b < k && ok; ++b)
        ok = g.has_edge(nodes[static_cast<std::size_t>(perm[a])], nodes[static_cast<std::size_t>(perm[b])]) ==
             pattern.has_edge(a, b);
    if (ok) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

Graph from_edges(int n, std::initializer_list<std::pair<int, int>> edges) {
  Graph g(n);
  for (auto [i, j] : edges) g.add_edge(i, j);
  return g;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  void write(const std::string& file, const std::string& text) const { std::ofstream(path / file) << text; }
};

bool all_valid(const GraphDataset& ds) {
  try {
    check_dataset(ds);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

bool same_graphs(const GraphDataset& a, const GraphDataset& b) {
  if (a.graphs.size() != b.graphs.size()) return false;
  for (std::size_t i = 0; i < a.graphs.size(); ++i)
    if (a.graphs[i].adjacency != b.graphs[i].adjacency || a.graphs[i].features != b.graphs[i].features ||
        a.graphs[i].label != b.graphs[i].label)
      return false;
  return true;
}

std::vector<std::size_t> class_counts(const GraphDataset& ds) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(ds.num_classes), 0);
  for (const auto& g : ds.graphs) ++counts[static_cast<std::size_t>(g.label)];
  return counts;
}

}  // namespace

TEST_CASE("ba-motif: 1000 graphs of 25 nodes with the expected edge density", "[graphdata]") {
  const GraphDataset ds = gen_ba_motif(1000, 7);
  REQUIRE(ds.size() == 1000);
  CHECK(ds.num_classes == 2);
  for (const auto& g : ds.graphs) REQUIRE(g.num_nodes() == 25);
  // Base tree (19) + attachment (1) + house (6) or cycle (5): 25.5 undirected on average.
  CHECK(ds.mean_edges() == Approx(25.5));
  // Directed count, the convention of the published statistics table (50.93).
  CHECK(2.0 * ds.mean_edges() == Approx(50.93).margin(0.5));
  CHECK(all_valid(ds));
}

TEST_CASE("ba-motif: smallest even size gives one graph per class", "[graphdata]") {
  const GraphDataset ds = gen_ba_motif(2, 1);
  REQUIRE(ds.size() == 2);
  CHECK(class_counts(ds) == std::vector<std::size_t>{1, 1});
}

TEST_CASE("ba-motif: the last five nodes hold the class motif", "[graphdata]") {
  const GraphDataset ds = gen_ba_motif(40, 3);
  const Graph house = from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {1, 4}});
  const Graph cycle = from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}});
  const std::vector<int> block{20, 21, 22, 23, 24};
  for (const auto& g : ds.graphs) {
    CHECK(induced_isomorphic(g, block, g.label == 0 ? house : cycle));
    CHECK_FALSE(induced_isomorphic(g, block, g.label == 0 ? cycle : house));
    int attachments = 0;
    for (int m : block)
      for (int b = 0; b < 20; ++b) attachments += g.has_edge(m, b) ? 1 : 0;
    CHECK(attachments == 1);
  }
}

TEST_CASE("ba-motif and ba-lrp reject odd sizes", "[graphdata]") {
  CHECK_THROWS_AS(gen_ba_motif(3, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_ba_lrp(5, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_ba_motif(0, 1), std::invalid_argument);
}

TEST_CASE("ba-lrp: 20000 graphs of 20 nodes", "[graphdata][slow]") {
  const GraphDataset ds = gen_ba_lrp(20000, 7);
  REQUIRE(ds.size() == 20000);
  CHECK(ds.num_classes == 2);
  CHECK(class_counts(ds) == std::vector<std::size_t>{10000, 10000});
  for (const auto& g : ds.graphs) REQUIRE(g.num_nodes() == 20);
  CHECK(all_valid(ds));
}

TEST_CASE("ba-lrp: smallest even size gives one graph per class", "[graphdata]") {
  CHECK(class_counts(gen_ba_lrp(2, 1)) == std::vector<std::size_t>{1, 1});
}

TEST_CASE("ba-lrp: degree-concentrated class has larger hubs", "[graphdata]") {
  const GraphDataset ds = gen_ba_lrp(200, 11);
  double max_deg[2] = {0.0, 0.0};
  int count[2] = {0, 0};
  for (const auto& g : ds.graphs) {
    if (count[g.label] == 100) continue;
    const auto deg = g.degrees();
    max_deg[g.label] += *std::max_element(deg.begin(), deg.end());
    ++count[g.label];
  }
  CHECK(count[0] == 100);
  CHECK(count[1] == 100);
  CHECK(max_deg[1] / 100.0 > max_deg[0] / 100.0);
}

TEST_CASE("shape: four balanced classes", "[graphdata]") {
  const GraphDataset ds = gen_shape(100, 7);
  REQUIRE(ds.size() == 100);
  CHECK(ds.num_classes == 4);
  CHECK(class_counts(ds) == std::vector<std::size_t>{25, 25, 25, 25});
  for (const auto& g : ds.graphs) {
    CHECK(g.num_nodes() >= 20);
    CHECK(g.num_nodes() <= 82);  // grids round to the nearest r x c lattice
  }
  CHECK(all_valid(ds));
  CHECK_THROWS_AS(gen_shape(99, 7), std::invalid_argument);
  CHECK_THROWS_AS(gen_shape(0, 7), std::invalid_argument);
}

TEST_CASE("shape families have their defining edge counts", "[graphdata]") {
  for (int k : {4, 5, 9, 20}) {
    CHECK(star_graph(k).num_edges() == static_cast<std::size_t>(k - 1));
    CHECK(wheel_graph(k).num_edges() == static_cast<std::size_t>(2 * (k - 1)));
  }
  CHECK(grid_graph(4, 5).num_edges() == 31u);
  CHECK(grid_graph(4, 5).num_nodes() == 20);
  const Graph lolli = lollipop_graph(5, 3);
  CHECK(lolli.num_nodes() == 8);
  CHECK(lolli.num_edges() == 10u + 3u);
}

TEST_CASE("generators are bit-reproducible and class-balanced", "[graphdata]") {
  for (const std::string name : {"ba-motif", "ba-lrp", "shape"}) {
    const GraphDataset a = generate_dataset(name, 40, 5), b = generate_dataset(name, 40, 5),
                       c = generate_dataset(name, 40, 6);
    CHECK(same_graphs(a, b));
    CHECK_FALSE(same_graphs(a, c));
    const auto counts = class_counts(a);
    CHECK(*std::max_element(counts.begin(), counts.end()) == *std::min_element(counts.begin(), counts.end()));
    CHECK(all_valid(a));
  }
  CHECK_THROWS_WITH(generate_dataset("ba-house", 10, 1), Catch::Matchers::ContainsSubstring("ba-motif, ba-lrp, shape"));
}

TEST_CASE("MUTAG loads with one-hot atom types", "[graphdata][mutag]") {
  const GraphDataset ds = load_tu_dataset(std::filesystem::path(GDM_DATA_DIR) / "MUTAG");
  REQUIRE(ds.size() == 188);
  CHECK(ds.num_classes == 2);
  CHECK(ds.mean_nodes() == Approx(17.93).margin(0.005));
  CHECK(ds.feature_dim == 7);
  CHECK(ds.semantic_features);
  CHECK(ds.node_type_names == std::vector<std::string>{"C", "N", "O", "F", "I", "Cl", "Br"});
  CHECK(class_counts(ds) == std::vector<std::size_t>{63, 125});
  for (const auto& g : ds.graphs)
    for (Index i = 0; i < g.features.rows(); ++i) REQUIRE(g.features.row(i).sum() == 1.0);
  CHECK(all_valid(ds));
}

TEST_CASE("TU loader: single two-node graph with 1-indexed endpoints", "[graphdata]") {
  TempDir dir("gdm_tu_tiny");
  dir.write("T_A.txt", "1, 2\n2, 1\n");
  dir.write("T_graph_indicator.txt", "1\n1\n");
  dir.write("T_graph_labels.txt", "1\n");
  const GraphDataset ds = load_tu_dataset(dir.path);
  REQUIRE(ds.size() == 1);
  const Graph& g = ds.graphs[0];
  CHECK(g.num_nodes() == 2);
  CHECK(g.num_edges() == 1u);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK_FALSE(ds.semantic_features);
  CHECK(g.features == surrogate_index_features(2, 2));
}

TEST_CASE("TU loader: second graph's endpoints map to local indices", "[graphdata]") {
  TempDir dir("gdm_tu_two");
  dir.write("T_A.txt", "1, 2\n2, 1\n4, 5\n5, 4\n3, 5\n5, 3\n");
  dir.write("T_graph_indicator.txt", "1\n1\n2\n2\n2\n");
  dir.write("T_graph_labels.txt", "-1\n1\n");
  dir.write("T_node_labels.txt", "0\n2\n1\n1\n0\n");
  const GraphDataset ds = load_tu_dataset(dir.path);
  REQUIRE(ds.size() == 2);
  CHECK(ds.graphs[0].label == 0);
  CHECK(ds.graphs[1].label == 1);
  const Graph& g = ds.graphs[1];
  CHECK(g.has_edge(1, 2));
  CHECK(g.has_edge(0, 2));
  CHECK_FALSE(g.has_edge(0, 1));
  CHECK(g.features(2, 0) == 1.0);
  CHECK(ds.node_type_names == std::vector<std::string>{"0", "1", "2"});
}

TEST_CASE("TU loader errors name the file and line", "[graphdata]") {
  SECTION("missing files") {
    TempDir dir("gdm_tu_missing");
    dir.write("T_A.txt", "1, 2\n");
    CHECK_THROWS_AS(load_tu_dataset(dir.path), ParseError);
  }
  SECTION("malformed edge line") {
    TempDir dir("gdm_tu_bad");
    dir.write("T_A.txt", "1, 2\n2 1\n");
    dir.write("T_graph_indicator.txt", "1\n1\n");
    dir.write("T_graph_labels.txt", "1\n");
    CHECK_THROWS_WITH(load_tu_dataset(dir.path), Catch::Matchers::ContainsSubstring("T_A.txt:2"));
  }
  SECTION("edge across graphs") {
    TempDir dir("gdm_tu_cross");
    dir.write("T_A.txt", "1, 3\n");
    dir.write("T_graph_indicator.txt", "1\n1\n2\n");
    dir.write("T_graph_labels.txt", "1\n2\n");
    CHECK_THROWS_WITH(load_tu_dataset(dir.path), Catch::Matchers::ContainsSubstring("joins two graphs"));
  }
  SECTION("node label count mismatch") {
    TempDir dir("gdm_tu_labels");
    dir.write("T_A.txt", "1, 2\n");
    dir.write("T_graph_indicator.txt", "1\n1\n");
    dir.write("T_graph_labels.txt", "1\n");
    dir.write("T_node_labels.txt", "0\n");
    CHECK_THROWS_WITH(load_tu_dataset(dir.path), Catch::Matchers::ContainsSubstring("T_node_labels.txt"));
  }
  SECTION("not a directory") { CHECK_THROWS_AS(load_tu_dataset("/nonexistent/gdm"), ParseError); }
}

TEST_CASE("split: stratified 85/15 on ba-motif", "[graphdata]") {
  const GraphDataset ds = split_dataset(gen_ba_motif(1000, 7), 0.85, 1);
  CHECK(ds.indices(Split::train).size() == 850);
  CHECK(ds.indices(Split::test).size() == 150);
  CHECK(ds.indices(Split::train, 0).size() == 425);
  CHECK(ds.indices(Split::train, 1).size() == 425);
  CHECK(ds.indices(Split::test, 0).size() == 75);
  CHECK(ds.indices(Split::test, 1).size() == 75);
}

TEST_CASE("split: deterministic for a seed", "[graphdata]") {
  const GraphDataset base = gen_ba_motif(100, 7);
  CHECK(split_dataset(base, 0.85, 4).split == split_dataset(base, 0.85, 4).split);
  CHECK(split_dataset(base, 0.85, 4).split != split_dataset(base, 0.85, 5).split);
}

TEST_CASE("split: MUTAG gives 159 train and 29 test", "[graphdata][mutag]") {
  const GraphDataset ds = split_dataset(load_tu_dataset(std::filesystem::path(GDM_DATA_DIR) / "MUTAG"), 0.85, 1);
  // floor(0.85 * 63) = 53 and floor(0.85 * 125) = 106 training graphs
  CHECK(ds.indices(Split::train).size() == 159);
  CHECK(ds.indices(Split::test).size() == 29);
  CHECK(ds.indices(Split::train, 0).size() == 53);
  CHECK(ds.indices(Split::train, 1).size() == 106);
}

TEST_CASE("split: rejects tiny classes and bad fractions", "[graphdata]") {
  GraphDataset ds;
  ds.name = "tiny";
  ds.num_classes = 2;
  ds.graphs = {Graph(2, 0), Graph(2, 0), Graph(2, 1)};
  finish_featureless(ds);
  CHECK_THROWS_AS(split_dataset(ds, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(gen_ba_motif(10, 1), 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(gen_ba_motif(10, 1), 0.0, 1), std::invalid_argument);
}

TEST_CASE("normalize_adjacency worked examples", "[graphdata]") {
  CHECK(normalize_adjacency(Matrix::Zero(1, 1))(0, 0) == Approx(1.0));
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const Matrix n = normalize_adjacency(a);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) CHECK(n(i, j) == Approx(0.5));
}

TEST_CASE("normalize_adjacency keeps symmetry and [0,1] range on relaxed input", "[graphdata][property]") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(9));
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) a(i, j) = a(j, i) = rng.uniform();
    const Matrix s = normalize_adjacency(a);
    REQUIRE((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE(s.minCoeff() >= 0.0);
    REQUIRE(s.maxCoeff() <= 1.0);
  }
}

TEST_CASE("surrogate index features", "[graphdata]") {
  const Matrix f = surrogate_index_features(3, 5);
  REQUIRE(f.rows() == 3);
  REQUIRE(f.cols() == 5);
  for (Index i = 0; i < 3; ++i) {
    CHECK(f(i, i) == 1.0);
    CHECK(f.row(i).sum() == 1.0);
  }
  CHECK(surrogate_index_features(1, 1) == Matrix::Ones(1, 1));
  CHECK_THROWS_AS(surrogate_index_features(6, 5), std::invalid_argument);
}

TEST_CASE("graph invariants are enforced", "[graphdata]") {
  Graph g(3);
  CHECK_THROWS_AS(g.add_edge(1, 1), std::invalid_argument);
  g.add_edge(0, 2);
  g.features = surrogate_index_features(3, 3);
  CHECK_NOTHROW(check_graph(g, 3));
  g.adjacency(1, 0) = 1.0;
  CHECK_THROWS_AS(check_graph(g, 3), std::invalid_argument);
}
