#pragma once

#include "gdm/errors.hpp"
#include "gdm/gcn.hpp"
#include "gdm/gdm.hpp"
#include "gdm/graph.hpp"
#include "gdm/metrics.hpp"
#include "gdm/rng.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace gdm {

using Json = nlohmann::ordered_json;

/// Hex rendering used for every hash stored in an artifact.
inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t json_hash(const Json& j) { return fnv1a(j.dump()); }

// Matrices are stored row-major with explicit shape; doubles round-trip
// exactly through the JSON number printer.

inline Json matrix_to_json(const Matrix& m) {
  Json data = Json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  try {
    const Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
    const Json& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
      throw ParseError(where + ": data length " + std::to_string(data.size()) + " does not match shape " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    Matrix m(rows, cols);
    for (Index k = 0; k < rows * cols; ++k) m(k / cols, k % cols) = data[static_cast<std::size_t>(k)].get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline Json edges_to_json(const Graph& g) {
  Json edges = Json::array();
  for (const auto& [i, j] : g.edges()) edges.push_back({i, j});
  return edges;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---- datasets --------------------------------------------------------------

/// Featureless datasets store `features: null`; the loader restores index
/// features padded to feature_dim.
inline Json dataset_to_json(const GraphDataset& ds) {
  Json graphs = Json::array();
  for (const Graph& g : ds.graphs) {
    Json jg{{"n", g.num_nodes()}, {"edges", edges_to_json(g)}};
    if (ds.semantic_features) {
      Json rows = Json::array();
      for (Index i = 0; i < g.features.rows(); ++i) {
        Json row = Json::array();
        for (Index k = 0; k < g.features.cols(); ++k) row.push_back(g.features(i, k));
        rows.push_back(std::move(row));
      }
      jg["features"] = std::move(rows);
    } else {
      jg["features"] = nullptr;
    }
    jg["label"] = g.label;
    graphs.push_back(std::move(jg));
  }
  Json j{{"name", ds.name}, {"num_classes", ds.num_classes}, {"feature_dim", ds.feature_dim}};
  if (!ds.node_type_names.empty()) j["node_type_names"] = ds.node_type_names;
  j["graphs"] = std::move(graphs);
  return j;
}

/// Content hash of a dataset, independent of extra metadata in its file.
inline std::uint64_t dataset_fingerprint(const GraphDataset& ds) { return json_hash(dataset_to_json(ds)); }

inline GraphDataset dataset_from_json(const Json& j, const std::string& where = "dataset") {
  GraphDataset ds;
  try {
    ds.name = j.at("name").get<std::string>();
    ds.num_classes = j.at("num_classes").get<int>();
    ds.feature_dim = j.at("feature_dim").get<int>();
    if (j.contains("node_type_names")) ds.node_type_names = j.at("node_type_names").get<std::vector<std::string>>();
    const Json& graphs = j.at("graphs");
    bool any_null = false, any_dense = false;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
      const Json& jg = graphs[gi];
      const std::string here = where + ": graphs[" + std::to_string(gi) + "]";
      const int n = jg.at("n").get<int>();
      if (n <= 0) throw ParseError(here + ": n must be positive");
      Graph g(n, jg.at("label").get<int>());
      for (const Json& e : jg.at("edges")) {
        const int u = e.at(0).get<int>(), v = e.at(1).get<int>();
        if (e.size() != 2 || u < 0 || v < 0 || u >= n || v >= n || u == v)
          throw ParseError(here + ": bad edge " + e.dump());
        g.add_edge(u, v);
      }
      const Json& feats = jg.at("features");
      if (feats.is_null()) {
        any_null = true;
        if (n > ds.feature_dim) throw ParseError(here + ": " + std::to_string(n) + " nodes exceed feature_dim");
        g.features = surrogate_index_features(n, ds.feature_dim);
      } else {
        any_dense = true;
        if (feats.size() != static_cast<std::size_t>(n)) throw ParseError(here + ": features need one row per node");
        g.features = Matrix::Zero(n, ds.feature_dim);
        for (int i = 0; i < n; ++i) {
          const Json& row = feats[static_cast<std::size_t>(i)];
          if (row.size() != static_cast<std::size_t>(ds.feature_dim))
            throw ParseError(here + ": feature row " + std::to_string(i) + " has length " + std::to_string(row.size()) +
                             ", expected " + std::to_string(ds.feature_dim));
          for (int k = 0; k < ds.feature_dim; ++k) g.features(i, k) = row[static_cast<std::size_t>(k)].get<double>();
        }
      }
      ds.graphs.push_back(std::move(g));
    }
    if (any_null && any_dense) throw ParseError(where + ": mixes null and explicit features");
    ds.semantic_features = any_dense;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  ds.split.assign(ds.graphs.size(), Split::train);
  ds.rebuild_class_index();
  try {
    check_dataset(ds);
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ": " + e.what());
  }
  return ds;
}

// ---- models ----------------------------------------------------------------

inline Json model_to_json(const GcnModel& m) {
  Json conv = Json::array();
  for (std::size_t l = 0; l < m.conv_weight.size(); ++l)
    conv.push_back({{"weight", matrix_to_json(m.conv_weight[l])}, {"bias", matrix_to_json(m.conv_bias[l])}});
  return Json{{"input_dim", m.input_dim},
              {"hidden_dim", m.hidden_dim},
              {"num_classes", m.num_classes},
              {"conv", std::move(conv)},
              {"head", {{"weight", matrix_to_json(m.head_weight)}, {"bias", matrix_to_json(m.head_bias)}}}};
}

inline GcnModel model_from_json(const Json& j, const std::string& where = "model") {
  GcnModel m;
  try {
    m.input_dim = j.at("input_dim").get<int>();
    m.hidden_dim = j.at("hidden_dim").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    const Json& conv = j.at("conv");
    if (conv.size() != m.conv_weight.size())
      throw ParseError(where + ": expected " + std::to_string(m.conv_weight.size()) + " conv layers");
    for (std::size_t l = 0; l < m.conv_weight.size(); ++l) {
      const std::string here = where + ": conv[" + std::to_string(l) + "]";
      m.conv_weight[l] = matrix_from_json(conv[l].at("weight"), here + ".weight");
      m.conv_bias[l] = matrix_from_json(conv[l].at("bias"), here + ".bias");
    }
    m.head_weight = matrix_from_json(j.at("head").at("weight"), where + ": head.weight");
    m.head_bias = matrix_from_json(j.at("head").at("bias"), where + ": head.bias");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  const auto expect = [&](const Matrix& x, Index r, Index c, const std::string& name) {
    if (x.rows() != r || x.cols() != c)
      throw ParseError(where + ": " + name + " is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                       ", expected " + std::to_string(r) + "x" + std::to_string(c));
  };
  for (std::size_t l = 0; l < m.conv_weight.size(); ++l) {
    expect(m.conv_weight[l], l == 0 ? m.input_dim : m.hidden_dim, m.hidden_dim, "conv weight " + std::to_string(l));
    expect(m.conv_bias[l], 1, m.hidden_dim, "conv bias " + std::to_string(l));
  }
  expect(m.head_weight, m.hidden_dim, m.num_classes, "head weight");
  expect(m.head_bias, 1, m.num_classes, "head bias");
  return m;
}

// ---- interpretations -------------------------------------------------------

inline Json interpretations_to_json(const GdmState& state, bool semantic) {
  Json graphs = Json::array();
  for (const InterpretiveGraph* ig : state.all()) {
    graphs.push_back({{"class_id", ig->class_id},
                      {"m", ig->num_nodes()},
                      {"omega", matrix_to_json(ig->omega)},
                      {"features", matrix_to_json(ig->features)},
                      {"tau", ig->tau},
                      {"edges", edges_to_json(discretize(*ig, semantic))}});
  }
  return Json{{"sparsity_target", state.sparsity_target},
              {"train_features", state.train_features},
              {"semantic_features", semantic},
              {"graphs", std::move(graphs)}};
}

struct LoadedInterpretations {
  GdmState state;
  bool semantic = false;
};

inline LoadedInterpretations interpretations_from_json(const Json& j, const std::string& where = "interpretations") {
  LoadedInterpretations out;
  try {
    out.state.sparsity_target = j.at("sparsity_target").get<double>();
    out.state.train_features = j.at("train_features").get<bool>();
    out.semantic = j.at("semantic_features").get<bool>();
    const Json& graphs = j.at("graphs");
    for (std::size_t k = 0; k < graphs.size(); ++k) {
      const std::string here = where + ": graphs[" + std::to_string(k) + "]";
      InterpretiveGraph ig;
      ig.class_id = graphs[k].at("class_id").get<int>();
      ig.omega = matrix_from_json(graphs[k].at("omega"), here + ".omega");
      ig.features = matrix_from_json(graphs[k].at("features"), here + ".features");
      ig.tau = graphs[k].at("tau").get<double>();
      if (ig.class_id < 0) throw ParseError(here + ": negative class_id");
      if (ig.omega.rows() != ig.omega.cols() || ig.omega.rows() != graphs[k].at("m").get<Index>() ||
          ig.features.rows() != ig.omega.rows())
        throw ParseError(here + ": omega/features shapes disagree with m");
      if (!(ig.tau > 0.0)) throw ParseError(here + ": tau must be positive");
      const auto c = static_cast<std::size_t>(ig.class_id);
      if (out.state.interps.size() <= c) out.state.interps.resize(c + 1);
      out.state.interps[c].push_back(std::move(ig));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (out.state.interps.empty()) throw ParseError(where + ": no interpretive graphs");
  return out;
}

// ---- metrics and logs ------------------------------------------------------

inline Json stat_to_json(const Stat& s) { return Json{{"mean", s.mean}, {"std", s.std}, {"runs", s.runs}}; }

inline Json metrics_to_json(const MetricsReport& r) {
  Json seeds = Json::array();
  for (std::uint64_t s : r.seeds) seeds.push_back(s);
  return Json{{"fidelity", stat_to_json(r.fidelity)},
              {"utility", stat_to_json(r.utility)},
              {"predictive_accuracy", stat_to_json(r.predictive_accuracy)},
              {"mean_sparsity", r.mean_sparsity},
              {"seeds", std::move(seeds)}};
}

inline std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "repetition,seed,fidelity,utility,predictive_accuracy,mean_sparsity\n";
  for (std::size_t k = 0; k < r.fidelity.runs.size(); ++k)
    os << k << ',' << r.seeds.at(k) << ',' << r.fidelity.runs[k] << ',' << r.utility.runs[k] << ','
       << r.predictive_accuracy.runs.at(k) << ',' << r.mean_sparsity << '\n';
  return os.str();
}

inline std::string training_log_csv(const std::vector<IterationLog>& log, int num_classes) {
  std::ostringstream os;
  os << std::setprecision(17) << "restart,iteration,ce_loss";
  for (int c = 0; c < num_classes; ++c) os << ",dm_loss_c" << c;
  os << '\n';
  for (const IterationLog& row : log) {
    os << row.restart << ',' << row.iteration << ',' << row.ce_loss;
    for (double v : row.dm_loss) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

// ---- DOT -------------------------------------------------------------------

/// Undirected DOT rendering. Nodes are labelled with the argmax of their
/// feature row, mapped through `type_names` when given.
inline std::string to_dot(const Graph& g, const std::string& name, const std::vector<std::string>& type_names = {}) {
  std::ostringstream os;
  os << "graph " << name << " {\n";
  for (int i = 0; i < g.num_nodes(); ++i) {
    std::string label = std::to_string(i);
    if (g.features.rows() == g.num_nodes() && g.features.cols() > 0) {
      Index k = 0;
      g.features.row(i).maxCoeff(&k);
      label = static_cast<std::size_t>(k) < type_names.size() ? type_names[static_cast<std::size_t>(k)]
                                                                : std::to_string(k);
    }
    os << "  n" << i << " [label=\"" << label << "\"];\n";
  }
  for (const auto& [i, j] : g.edges()) os << "  n" << i << " -- n" << j << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace gdm
