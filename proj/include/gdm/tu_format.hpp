#pragma once

#include "gdm/datasets.hpp"
#include "gdm/errors.hpp"
#include "gdm/graph.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gdm {

namespace tu_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline long parse_int(const std::string& token, const std::filesystem::path& file, std::size_t line) {
  const std::string t = trim(token);
  long value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
    throw ParseError(file.string() + ":" + std::to_string(line) + ": expected integer, got '" + t + "'");
  return value;
}

/// One integer per non-empty line.
inline std::vector<long> read_column(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError(file.string() + ": cannot open");
  std::vector<long> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    out.push_back(parse_int(line, file, lineno));
  }
  return out;
}

/// "Node labels:" block of a TU README ("  0  C" lines), if present.
inline std::map<long, std::string> read_node_label_names(const std::filesystem::path& readme) {
  std::map<long, std::string> names;
  std::ifstream in(readme);
  if (!in) return names;
  std::string line;
  bool in_block = false;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t == "Node labels:") {
      in_block = true;
      continue;
    }
    if (!in_block) continue;
    if (t.empty()) {
      if (!names.empty()) break;
      continue;
    }
    const auto sep = t.find_first_of(" \t");
    if (sep == std::string::npos) break;
    long id = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + sep, id);
    if (ec != std::errc{}) break;
    names[id] = trim(t.substr(sep));
  }
  return names;
}

}  // namespace tu_detail

/// Loads a TU-format benchmark directory (DS_A.txt, DS_graph_indicator.txt,
/// DS_graph_labels.txt and optionally DS_node_labels.txt). Node types become
/// one-hot features; graph labels are remapped to [0, C) in ascending order.
/// Without node labels the graphs get index features.
inline GraphDataset load_tu_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  using tu_detail::parse_int;
  if (!fs::is_directory(dir)) throw ParseError(dir.string() + ": not a directory");

  std::string prefix;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string fname = entry.path().filename().string();
    const std::string suffix = "_A.txt";
    if (fname.size() > suffix.size() && fname.ends_with(suffix)) {
      prefix = fname.substr(0, fname.size() - suffix.size());
      break;
    }
  }
  if (prefix.empty()) throw ParseError(dir.string() + ": no *_A.txt file found");
  const auto file = [&](const std::string& part) { return dir / (prefix + "_" + part + ".txt"); };

  const std::vector<long> indicator = tu_detail::read_column(file("graph_indicator"));
  const std::vector<long> graph_labels = tu_detail::read_column(file("graph_labels"));
  std::optional<std::vector<long>> node_labels;
  if (fs::exists(file("node_labels"))) {
    node_labels = tu_detail::read_column(file("node_labels"));
    if (node_labels->size() != indicator.size())
      throw ParseError(file("node_labels").string() + ": " + std::to_string(node_labels->size()) +
                       " lines, expected " + std::to_string(indicator.size()) +
                       " (one per node in graph_indicator)");
  }

  const std::size_t n_graphs = graph_labels.size();
  if (n_graphs == 0) throw ParseError(file("graph_labels").string() + ": no graphs");

  // Nodes of one graph are contiguous in the indicator file.
  std::vector<std::size_t> first_node(n_graphs, 0), node_count(n_graphs, 0);
  std::vector<std::size_t> local_index(indicator.size(), 0);
  for (std::size_t v = 0; v < indicator.size(); ++v) {
    const long gid = indicator[v];
    if (gid < 1 || static_cast<std::size_t>(gid) > n_graphs)
      throw ParseError(file("graph_indicator").string() + ":" + std::to_string(v + 1) + ": graph id " +
                       std::to_string(gid) + " outside [1, " + std::to_string(n_graphs) + "]");
    const auto g = static_cast<std::size_t>(gid - 1);
    if (v > 0 && indicator[v] < indicator[v - 1])
      throw ParseError(file("graph_indicator").string() + ":" + std::to_string(v + 1) +
                       ": graph ids must be non-decreasing");
    if (node_count[g] == 0) first_node[g] = v;
    local_index[v] = node_count[g]++;
  }
  for (std::size_t g = 0; g < n_graphs; ++g)
    if (node_count[g] == 0)
      throw ParseError(file("graph_indicator").string() + ": graph " + std::to_string(g + 1) + " has no nodes");

  const std::set<long> distinct(graph_labels.begin(), graph_labels.end());
  const std::vector<long> label_values(distinct.begin(), distinct.end());

  long min_type = 0, max_type = -1;
  if (node_labels) {
    min_type = *std::min_element(node_labels->begin(), node_labels->end());
    max_type = *std::max_element(node_labels->begin(), node_labels->end());
  }

  GraphDataset ds;
  ds.name = prefix;
  ds.num_classes = static_cast<int>(label_values.size());
  ds.graphs.reserve(n_graphs);
  for (std::size_t g = 0; g < n_graphs; ++g) {
    const auto label = std::lower_bound(label_values.begin(), label_values.end(), graph_labels[g]) -
                       label_values.begin();
    ds.graphs.emplace_back(static_cast<int>(node_count[g]), static_cast<int>(label));
  }

  {
    const fs::path a_file = file("A");
    std::ifstream in(a_file);
    if (!in) throw ParseError(a_file.string() + ": cannot open");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (tu_detail::trim(line).empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw ParseError(a_file.string() + ":" + std::to_string(lineno) + ": expected 'row, col'");
      const long u = parse_int(line.substr(0, comma), a_file, lineno);
      const long v = parse_int(line.substr(comma + 1), a_file, lineno);
      const auto n_nodes = static_cast<long>(indicator.size());
      if (u < 1 || v < 1 || u > n_nodes || v > n_nodes)
        throw ParseError(a_file.string() + ":" + std::to_string(lineno) + ": node id out of range");
      const auto ui = static_cast<std::size_t>(u - 1), vi = static_cast<std::size_t>(v - 1);
      if (indicator[ui] != indicator[vi])
        throw ParseError(a_file.string() + ":" + std::to_string(lineno) + ": edge joins two graphs");
      if (ui == vi) continue;
      ds.graphs[static_cast<std::size_t>(indicator[ui] - 1)].add_edge(static_cast<int>(local_index[ui]),
                                                                      static_cast<int>(local_index[vi]));
    }
  }

  if (node_labels) {
    ds.feature_dim = static_cast<int>(max_type - min_type + 1);
    ds.semantic_features = true;
    for (std::size_t g = 0; g < n_graphs; ++g) {
      Matrix x = Matrix::Zero(static_cast<Index>(node_count[g]), ds.feature_dim);
      for (std::size_t k = 0; k < node_count[g]; ++k)
        x(static_cast<Index>(k), (*node_labels)[first_node[g] + k] - min_type) = 1.0;
      ds.graphs[g].features = std::move(x);
    }
    const auto names = tu_detail::read_node_label_names(dir / "README.txt");
    for (long t = min_type; t <= max_type; ++t) {
      const auto it = names.find(t);
      ds.node_type_names.push_back(it != names.end() ? it->second : std::to_string(t));
    }
    ds.split.assign(ds.graphs.size(), Split::train);
    ds.rebuild_class_index();
  } else {
    finish_featureless(ds);
  }
  check_dataset(ds);
  return ds;
}

}  // namespace gdm
