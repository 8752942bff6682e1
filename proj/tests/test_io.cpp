#include "gdm/experiment.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace gdm;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("gdm_test_io_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json small_config_json() {
  return Json::parse(R"({
    "dataset": {"generator": "ba-motif", "n_graphs": 40, "seed": 3},
    "seed": 17,
    "repetitions": 2,
    "eval_epochs": 5,
    "gdm": {"graphs_per_class": 2, "iterations": 3, "restarts": 1, "hidden_dim": 16, "train_batch": 8}
  })");
}

}  // namespace

TEST_CASE("matrix json round-trip and shape errors", "[io]") {
  const Matrix m = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6.25).finished();
  CHECK(matrix_from_json(matrix_to_json(m), "m") == m);
  Json bad = matrix_to_json(m);
  bad["data"].erase(0);
  CHECK_THROWS_AS(matrix_from_json(bad, "m"), ParseError);
}

TEST_CASE("dataset json round-trip", "[io]") {
  const GraphDataset ds = gen_ba_motif(6, 2);
  const GraphDataset back = dataset_from_json(dataset_to_json(ds));
  REQUIRE(back.size() == ds.size());
  CHECK(back.name == ds.name);
  CHECK(back.feature_dim == ds.feature_dim);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.graphs[i].adjacency == ds.graphs[i].adjacency);
    CHECK(back.graphs[i].features == ds.graphs[i].features);
    CHECK(back.graphs[i].label == ds.graphs[i].label);
  }
  CHECK(dataset_fingerprint(back) == dataset_fingerprint(ds));
  CHECK(dataset_fingerprint(gen_ba_motif(6, 3)) != dataset_fingerprint(ds));
}

TEST_CASE("model json round-trip is bit exact", "[io]") {
  const GcnModel m = init_model(7, 12, 2, 5);
  CHECK(model_from_json(Json::parse(model_to_json(m).dump())) == m);
  Json bad = model_to_json(m);
  bad["hidden_dim"] = 13;
  CHECK_THROWS_AS(model_from_json(bad), ParseError);
}

TEST_CASE("interpretations json round-trip", "[io]") {
  const GraphDataset ds = split_dataset(gen_ba_motif(40, 1), 0.85, 1);
  GdmConfig cfg;
  cfg.graphs_per_class = 3;
  const GdmState s = init_interpretations(ds, cfg);
  const LoadedInterpretations li = interpretations_from_json(Json::parse(interpretations_to_json(s, false).dump()));
  CHECK_FALSE(li.semantic);
  CHECK(li.state.sparsity_target == s.sparsity_target);
  REQUIRE(li.state.all().size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(li.state.all()[k]->omega == s.all()[k]->omega);
    CHECK(li.state.all()[k]->class_id == s.all()[k]->class_id);
  }
}

TEST_CASE("csv and dot writers", "[io]") {
  MetricsReport r;
  r.fidelity = aggregate({90.0, 80.0});
  r.utility = aggregate({70.0, 60.0});
  r.predictive_accuracy = aggregate({100.0, 100.0});
  r.seeds = {1, 2};
  const std::string csv = metrics_csv(r);
  CHECK_THAT(csv, ContainsSubstring("repetition,seed,fidelity,utility"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  std::vector<IterationLog> log{{0, 0, 0.7, {0.1, 0.2}}, {0, 1, 0.6, {0.05, 0.1}}};
  const std::string tl = training_log_csv(log, 2);
  CHECK(tl.rfind("restart,iteration,ce_loss,dm_loss_c0,dm_loss_c1\n", 0) == 0);

  Graph g(3);
  g.add_edge(0, 2);
  g.features = (Matrix(3, 2) << 1, 0, 0, 1, 1, 0).finished();
  const std::string dot = to_dot(g, "class0_graph0", {"C", "N"});
  CHECK(dot.rfind("graph class0_graph0 {", 0) == 0);
  CHECK_THAT(dot, ContainsSubstring("n0 -- n2;"));
  CHECK_THAT(dot, ContainsSubstring("\"N\""));
  CHECK(dot.back() == '\n');
}

TEST_CASE("config parsing", "[io][config]") {
  const ExperimentConfig c = config_from_json(small_config_json());
  CHECK(c.seed == 17);
  CHECK(c.gdm.seed == 17);
  CHECK(c.gdm.graphs_per_class == 2);
  CHECK(c.gdm.lr_interp == GdmConfig{}.lr_interp);
  CHECK(config_from_json(config_to_json(c)).gdm.iterations == 3);
  CHECK(config_hash(config_from_json(config_to_json(c))) == config_hash(c));

  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  moved.gdm.beta = 0.5;
  CHECK(config_hash(moved) != config_hash(c));
}

TEST_CASE("config errors name the offending field", "[io][config]") {
  Json j = small_config_json();
  j["gdm"]["learning_rate"] = 1.0;
  CHECK_THROWS_WITH(config_from_json(j), ContainsSubstring("config.gdm.learning_rate") && ContainsSubstring("unknown"));

  j = small_config_json();
  j.erase("seed");
  CHECK_THROWS_WITH(config_from_json(j), ContainsSubstring("config.seed") && ContainsSubstring("missing"));

  j = small_config_json();
  j["gdm"]["tau"] = "hot";
  CHECK_THROWS_WITH(config_from_json(j), ContainsSubstring("config.gdm.tau") && ContainsSubstring("wrong type"));

  j = small_config_json();
  j["dataset"]["generator"] = "ba-house";
  CHECK_THROWS_WITH(config_from_json(j), ContainsSubstring("valid: "));

  j = small_config_json();
  j["dataset"]["file"] = "x.json";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);

  j = small_config_json();
  j["gdm"]["variant"] = "median";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);

  j = small_config_json();
  j["gdm"]["tau"] = 0.0;
  CHECK_THROWS_WITH(config_from_json(j), ContainsSubstring("tau"));

  j = small_config_json();
  j["train_frac"] = 1.5;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);

  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("run, eval and export through the file artifacts", "[io][experiment]") {
  TempDir tmp("pipeline");
  const ExperimentConfig c = config_from_json(small_config_json());
  const RunOutput run = run_experiment(c);
  write_run(tmp.path / "run", c, run);
  for (const char* f : {"config.json", "interpretations.json", "model.json", "train_log.csv"})
    CHECK(fs::exists(tmp.path / "run" / f));
  CHECK(slurp(tmp.path / "run" / "train_log.csv").rfind("# config_hash " + hex64(run.config_hash), 0) == 0);

  EvalRequest req;
  req.interpretations = tmp.path / "run" / "interpretations.json";
  req.model = tmp.path / "run" / "model.json";
  const EvalOutput e = evaluate_run(req);
  CHECK(e.report.fidelity.runs.size() == 2);
  CHECK(e.metrics.at("config_hash") == hex64(run.config_hash));
  CHECK(e.metrics.at("variant") == "full");
  write_eval(tmp.path / "eval", e);
  CHECK(fs::exists(tmp.path / "eval" / "metrics.json"));
  CHECK(evaluate_run(req).metrics.dump() == e.metrics.dump());

  req.skip_train = true;
  CHECK(evaluate_run(req).report.fidelity.mean == 100.0);

  const auto dots = export_interpretations(req.interpretations, "dot", tmp.path / "dot");
  CHECK(dots.size() == 4);
  for (const auto& p : dots) CHECK(slurp(p).rfind("graph class", 0) == 0);
  const auto js = export_interpretations(req.interpretations, "json", tmp.path / "json");
  REQUIRE(js.size() == 1);
  CHECK(dataset_from_json(read_json_file(js[0])).size() == 4);
  CHECK_THROWS_AS(export_interpretations(req.interpretations, "png", tmp.path / "png"), ConfigError);
}

TEST_CASE("eval refuses mismatched artifacts", "[io][experiment]") {
  TempDir tmp("refuse");
  const ExperimentConfig a = config_from_json(small_config_json());
  Json other = small_config_json();
  other["seed"] = 18;
  const ExperimentConfig b = config_from_json(other);
  write_run(tmp.path / "a", a, run_experiment(a));
  write_run(tmp.path / "b", b, run_experiment(b));

  EvalRequest req;
  req.interpretations = tmp.path / "a" / "interpretations.json";
  req.model = tmp.path / "b" / "model.json";
  CHECK_THROWS_WITH(evaluate_run(req), ContainsSubstring("config hash mismatch"));

  req.model = tmp.path / "a" / "model.json";
  write_json_file(tmp.path / "other.json", dataset_to_json(gen_ba_motif(40, 4)));
  req.dataset = tmp.path / "other.json";
  CHECK_THROWS_WITH(evaluate_run(req), ContainsSubstring("fingerprint"));

  write_json_file(tmp.path / "same.json", dataset_to_json(gen_ba_motif(40, 3)));
  req.dataset = tmp.path / "same.json";
  CHECK_NOTHROW(evaluate_run(req));

  Json tampered = read_json_file(tmp.path / "a" / "model.json");
  tampered["config"]["gdm"]["beta"] = 0.7;
  write_json_file(tmp.path / "tampered.json", tampered);
  req.model = tmp.path / "tampered.json";
  CHECK_THROWS_WITH(evaluate_run(req), ContainsSubstring("config echo"));
}

TEST_CASE("generated dataset files carry their provenance", "[io]") {
  const Json j = generated_dataset_json("shape", 12, 4);
  CHECK(j.at("source").at("generator") == "shape");
  CHECK(j.at("config_hash").is_string());
  CHECK(j.dump() == generated_dataset_json("shape", 12, 4).dump());
  CHECK(dataset_from_json(j).size() == 12);
}
