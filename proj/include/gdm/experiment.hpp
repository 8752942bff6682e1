#pragma once

#include "gdm/datasets.hpp"
#include "gdm/errors.hpp"
#include "gdm/gdm.hpp"
#include "gdm/io.hpp"
#include "gdm/metrics.hpp"
#include "gdm/tu_format.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>

namespace gdm {

/// Where the graphs come from: exactly one of a generator, a dataset JSON
/// file, or a TU-format directory.
struct DatasetSpec {
  std::string generator;
  int n_graphs = 0;
  std::uint64_t seed = 0;
  std::string file;
  std::string tu_dir;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  double train_frac = 0.85;
  std::uint64_t seed = 0;  // master seed; every stream is derived from it
  int repetitions = 5;
  int eval_epochs = kSurrogateEpochs;
  std::string output_dir = "out";
  GdmConfig gdm;
};

namespace experiment_detail {

/// Reads an object, rejecting keys outside `known` and remembering the path
/// for error messages.
class Fields {
 public:
  Fields(const Json& j, std::string path, std::set<std::string> known) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    for (const auto& [key, value] : j_.items())
      if (!known.count(key)) throw ConfigError(name(key) + ": unknown field");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& require(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(name(key) + ": missing field");
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) const {
    try {
      return require(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(name(key) + ": wrong type (" + std::string(j_.at(key).type_name()) + ")");
    }
  }

  template <class T>
  void optional(const std::string& key, T& out) const {
    if (has(key)) out = get<T>(key);
  }

  std::string name(const std::string& key) const { return path_ + "." + key; }

 private:
  const Json& j_;
  std::string path_;
};

}  // namespace experiment_detail

inline Json dataset_spec_to_json(const DatasetSpec& d) {
  if (!d.generator.empty()) return Json{{"generator", d.generator}, {"n_graphs", d.n_graphs}, {"seed", d.seed}};
  if (!d.file.empty()) return Json{{"file", d.file}};
  return Json{{"tu_dir", d.tu_dir}};
}

inline DatasetSpec dataset_spec_from_json(const Json& j, const std::string& path) {
  experiment_detail::Fields f(j, path, {"generator", "n_graphs", "seed", "file", "tu_dir"});
  DatasetSpec d;
  const int sources = int(f.has("generator")) + int(f.has("file")) + int(f.has("tu_dir"));
  if (sources != 1) throw ConfigError(path + ": give exactly one of generator, file, tu_dir");
  if (f.has("generator")) {
    d.generator = f.get<std::string>("generator");
    d.n_graphs = f.get<int>("n_graphs");
    d.seed = f.get<std::uint64_t>("seed");
    const auto& names = generator_names();
    if (std::find(names.begin(), names.end(), d.generator) == names.end()) {
      std::string valid;
      for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
      throw ConfigError(f.name("generator") + ": unknown generator '" + d.generator + "' (valid: " + valid + ")");
    }
    if (d.n_graphs <= 0) throw ConfigError(f.name("n_graphs") + ": must be positive");
  } else if (f.has("file")) {
    d.file = f.get<std::string>("file");
  } else {
    d.tu_dir = f.get<std::string>("tu_dir");
  }
  return d;
}

inline Json gdm_config_to_json(const GdmConfig& c) {
  return Json{{"variant", to_string(c.variant)},
              {"graphs_per_class", c.graphs_per_class},
              {"iterations", c.iterations},
              {"restarts", c.restarts},
              {"interp_batch", c.interp_batch},
              {"train_batch", c.train_batch},
              {"lr_interp", c.lr_interp},
              {"lr_extractor", c.lr_extractor},
              {"lr_head", c.lr_head},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"tau", c.tau},
              {"model_steps_per_iter", c.model_steps_per_iter},
              {"hidden_dim", c.hidden_dim},
              {"init_logit", c.init_logit},
              {"snapshot_every", c.snapshot_every}};
}

inline GdmConfig gdm_config_from_json(const Json& j, const std::string& path) {
  experiment_detail::Fields f(j, path,
                              {"variant", "graphs_per_class", "iterations", "restarts", "interp_batch", "train_batch",
                               "lr_interp", "lr_extractor", "lr_head", "alpha", "beta", "tau", "model_steps_per_iter",
                               "hidden_dim", "init_logit", "snapshot_every"});
  GdmConfig c;
  if (f.has("variant")) {
    try {
      c.variant = parse_variant(f.get<std::string>("variant"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(f.name("variant") + ": " + e.what());
    }
  }
  f.optional("graphs_per_class", c.graphs_per_class);
  f.optional("iterations", c.iterations);
  f.optional("restarts", c.restarts);
  f.optional("interp_batch", c.interp_batch);
  f.optional("train_batch", c.train_batch);
  f.optional("lr_interp", c.lr_interp);
  f.optional("lr_extractor", c.lr_extractor);
  f.optional("lr_head", c.lr_head);
  f.optional("alpha", c.alpha);
  f.optional("beta", c.beta);
  f.optional("tau", c.tau);
  f.optional("model_steps_per_iter", c.model_steps_per_iter);
  f.optional("hidden_dim", c.hidden_dim);
  f.optional("init_logit", c.init_logit);
  f.optional("snapshot_every", c.snapshot_every);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

inline Json config_to_json(const ExperimentConfig& c) {
  return Json{{"dataset", dataset_spec_to_json(c.dataset)},
              {"train_frac", c.train_frac},
              {"seed", c.seed},
              {"repetitions", c.repetitions},
              {"eval_epochs", c.eval_epochs},
              {"output_dir", c.output_dir},
              {"gdm", gdm_config_to_json(c.gdm)}};
}

/// `dataset` and `seed` are required; everything else has a default.
inline ExperimentConfig config_from_json(const Json& j) {
  experiment_detail::Fields f(j, "config",
                              {"dataset", "train_frac", "seed", "repetitions", "eval_epochs", "output_dir", "gdm"});
  ExperimentConfig c;
  c.dataset = dataset_spec_from_json(f.require("dataset"), "config.dataset");
  c.seed = f.get<std::uint64_t>("seed");
  f.optional("train_frac", c.train_frac);
  f.optional("repetitions", c.repetitions);
  f.optional("eval_epochs", c.eval_epochs);
  f.optional("output_dir", c.output_dir);
  if (f.has("gdm")) c.gdm = gdm_config_from_json(f.require("gdm"), "config.gdm");
  c.gdm.seed = c.seed;
  if (!(c.train_frac > 0.0 && c.train_frac < 1.0)) throw ConfigError("config.train_frac: must lie in (0, 1)");
  if (c.repetitions < 1) throw ConfigError("config.repetitions: must be >= 1");
  if (c.eval_epochs < 0) throw ConfigError("config.eval_epochs: must be >= 0");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

/// Hash of everything that influences results; the output directory is left out.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  Json j = config_to_json(c);
  j.erase("output_dir");
  return json_hash(j);
}

/// A JSON file or a TU directory.
inline GraphDataset load_dataset_path(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_tu_dataset(path);
  return dataset_from_json(read_json_file(path), path.string());
}

inline GraphDataset load_dataset(const DatasetSpec& d) {
  if (!d.generator.empty()) return generate_dataset(d.generator, d.n_graphs, d.seed);
  if (!d.file.empty()) return load_dataset_path(d.file);
  return load_tu_dataset(d.tu_dir);
}

inline GraphDataset split_for(const ExperimentConfig& c, GraphDataset ds) {
  return split_dataset(std::move(ds), c.train_frac, derive_seed(c.seed, "split"));
}

/// Dataset file written by gen-data: the dataset plus its provenance.
inline Json generated_dataset_json(const std::string& name, int n_graphs, std::uint64_t seed) {
  Json j = dataset_to_json(generate_dataset(name, n_graphs, seed));
  const Json source{{"generator", name}, {"n_graphs", n_graphs}, {"seed", seed}};
  j["source"] = source;
  j["config_hash"] = hex64(json_hash(source));
  return j;
}

struct RunOutput {
  GraphDataset dataset;  // split
  GdmResult result;
  std::uint64_t config_hash = 0;
  std::uint64_t dataset_fingerprint = 0;
};

inline RunOutput run_experiment(const ExperimentConfig& c, const std::function<void(const IterationLog&)>& on_iteration = {}) {
  RunOutput out;
  GraphDataset raw = load_dataset(c.dataset);
  out.dataset_fingerprint = dataset_fingerprint(raw);
  out.dataset = split_for(c, std::move(raw));
  GdmConfig g = c.gdm;
  g.seed = c.seed;
  out.result = run_gdm(out.dataset, g, on_iteration);
  out.config_hash = config_hash(c);
  return out;
}

/// Writes config.json, interpretations.json, model.json and train_log.csv.
inline void write_run(const std::filesystem::path& dir, const ExperimentConfig& c, const RunOutput& run) {
  const std::string hash = hex64(run.config_hash), fp = hex64(run.dataset_fingerprint);
  Json config = config_to_json(c);
  config["config_hash"] = hash;
  write_json_file(dir / "config.json", config);

  Json interps = interpretations_to_json(run.result.state, run.dataset.semantic_features);
  interps["node_type_names"] = run.dataset.node_type_names;
  interps["config_hash"] = hash;
  interps["dataset_fingerprint"] = fp;
  write_json_file(dir / "interpretations.json", interps);

  Json model{{"config_hash", hash}, {"dataset_fingerprint", fp}, {"config", config_to_json(c)},
             {"model", model_to_json(run.result.model)}};
  write_json_file(dir / "model.json", model);

  std::string log = "# config_hash " + hash + "\n" + training_log_csv(run.result.log, run.dataset.num_classes);
  write_text_file(dir / "train_log.csv", log);
}

struct EvalRequest {
  std::filesystem::path interpretations;
  std::filesystem::path model;
  std::optional<std::filesystem::path> dataset;  // defaults to the run's own dataset source
  std::optional<int> repetitions;
  int threads = 1;
  bool skip_train = false;
};

struct EvalOutput {
  MetricsReport report;
  Json metrics;
};

inline std::string artifact_hash(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) throw ParseError(where + ": missing " + key);
  return j.at(key).get<std::string>();
}

/// Evaluates a run's interpretations against its model. Refuses artifacts
/// from different runs and a dataset other than the one the model saw.
inline EvalOutput evaluate_run(const EvalRequest& req) {
  const Json ij = read_json_file(req.interpretations);
  const Json mj = read_json_file(req.model);
  const std::string iw = req.interpretations.string(), mw = req.model.string();
  if (artifact_hash(ij, "config_hash", iw) != artifact_hash(mj, "config_hash", mw))
    throw std::runtime_error("config hash mismatch: " + iw + " and " + mw + " come from different runs");
  if (!mj.contains("config")) throw ParseError(mw + ": missing config");
  const ExperimentConfig c = config_from_json(mj.at("config"));
  if (hex64(config_hash(c)) != artifact_hash(mj, "config_hash", mw))
    throw std::runtime_error(mw + ": config echo does not match its config_hash");
  if (!mj.contains("model")) throw ParseError(mw + ": missing model");
  const GcnModel model = model_from_json(mj.at("model"), mw);
  const LoadedInterpretations li = interpretations_from_json(ij, iw);

  GraphDataset raw = req.dataset ? load_dataset_path(*req.dataset) : load_dataset(c.dataset);
  if (hex64(dataset_fingerprint(raw)) != artifact_hash(mj, "dataset_fingerprint", mw))
    throw std::runtime_error("dataset fingerprint mismatch: the model was trained on a different dataset");
  const GraphDataset ds = split_for(c, std::move(raw));
  if (model.input_dim != ds.feature_dim || model.num_classes != ds.num_classes)
    throw std::runtime_error("model expects " + std::to_string(model.input_dim) + " features and " +
                             std::to_string(model.num_classes) + " classes, dataset has " +
                             std::to_string(ds.feature_dim) + " and " + std::to_string(ds.num_classes));

  std::vector<Graph> interps;
  for (const auto* ig : li.state.all()) {
    if (ig->features.cols() != ds.feature_dim || ig->class_id >= ds.num_classes)
      throw std::runtime_error(iw + ": interpretation shape does not match the dataset");
    interps.push_back(discretize(*ig, li.semantic));
  }

  EvalOptions opts;
  opts.repetitions = req.repetitions.value_or(c.repetitions);
  if (opts.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  opts.epochs = c.eval_epochs;
  opts.seed = c.seed;
  opts.skip_train = req.skip_train;
  opts.threads = req.threads;
  EvalOutput out;
  out.report = evaluate_interpretations(model, interps, ds.view(Split::test), opts);

  Json m{{"dataset", ds.name}, {"variant", to_string(c.gdm.variant)}, {"graphs_per_class", c.gdm.graphs_per_class}};
  const Json report = metrics_to_json(out.report);
  for (const auto& [key, value] : report.items()) m[key] = value;
  m["skip_train"] = req.skip_train;
  m["config"] = config_to_json(c);
  m["config_hash"] = artifact_hash(mj, "config_hash", mw);
  out.metrics = std::move(m);
  return out;
}

inline void write_eval(const std::filesystem::path& dir, const EvalOutput& e) {
  write_json_file(dir / "metrics.json", e.metrics);
  write_text_file(dir / "metrics.csv",
                  "# config_hash " + e.metrics.at("config_hash").get<std::string>() + "\n" + metrics_csv(e.report));
}

/// Writes the discretized interpretations as class{c}_graph{i}.dot files or
/// as one dataset JSON. Returns the paths written.
inline std::vector<std::filesystem::path> export_interpretations(const std::filesystem::path& interpretations,
                                                                 const std::string& format,
                                                                 const std::filesystem::path& out_dir) {
  if (format != "dot" && format != "json") throw ConfigError("--format: unknown format '" + format + "' (valid: dot, json)");
  const Json ij = read_json_file(interpretations);
  const LoadedInterpretations li = interpretations_from_json(ij, interpretations.string());
  std::vector<std::string> names;
  if (ij.contains("node_type_names")) names = ij.at("node_type_names").get<std::vector<std::string>>();

  std::vector<std::filesystem::path> written;
  if (format == "dot") {
    for (std::size_t c = 0; c < li.state.interps.size(); ++c)
      for (std::size_t i = 0; i < li.state.interps[c].size(); ++i) {
        const std::string stem = "class" + std::to_string(c) + "_graph" + std::to_string(i);
        const auto path = out_dir / (stem + ".dot");
        write_text_file(path, to_dot(discretize(li.state.interps[c][i], li.semantic), stem, li.semantic ? names : std::vector<std::string>{}));
        written.push_back(path);
      }
    return written;
  }
  GraphDataset ds;
  ds.name = "interpretations";
  ds.num_classes = static_cast<int>(li.state.interps.size());
  ds.semantic_features = li.semantic;
  ds.node_type_names = names;
  for (const auto* ig : li.state.all()) ds.graphs.push_back(discretize(*ig, li.semantic));
  ds.feature_dim = static_cast<int>(ds.graphs.front().features.cols());
  Json j = dataset_to_json(ds);
  if (ij.contains("config_hash")) j["config_hash"] = ij.at("config_hash");
  const auto path = out_dir / "interpretations_discrete.json";
  write_json_file(path, j);
  written.push_back(path);
  return written;
}

}  // namespace gdm
