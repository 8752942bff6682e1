// gdm: dataset generation, interpretation runs, evaluation and export.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "gdm/experiment.hpp"
#include "gdm/gradcheck.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int cmd_gen_data(const std::string& name, int n, std::uint64_t seed, const std::string& out) {
  const auto& names = gdm::generator_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string valid;
    for (const auto& v : names) valid += (valid.empty() ? "" : ", ") + v;
    throw gdm::ConfigError("unknown dataset '" + name + "' (valid: " + valid + ")");
  }
  const gdm::Json j = gdm::generated_dataset_json(name, n, seed);
  const std::string path = out.empty() ? name + ".json" : out;
  gdm::write_json_file(path, j);
  std::cout << "wrote " << j.at("graphs").size() << " graphs to " << path << "\n";
  return 0;
}

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::optional<int> graphs_per_class;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  gdm::ExperimentConfig cfg = gdm::load_config(a.config);
  if (a.seed) cfg.seed = cfg.gdm.seed = *a.seed;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (!a.variant.empty()) {
    try {
      cfg.gdm.variant = gdm::parse_variant(a.variant);
    } catch (const std::invalid_argument& e) {
      throw gdm::ConfigError(std::string("--variant: ") + e.what());
    }
  }
  if (a.graphs_per_class) {
    if (*a.graphs_per_class < 1) throw gdm::ConfigError("--graphs-per-class: must be >= 1");
    cfg.gdm.graphs_per_class = *a.graphs_per_class;
  }

  const auto start = std::chrono::steady_clock::now();
  const int total = cfg.gdm.iterations;
  const gdm::RunOutput run = gdm::run_experiment(cfg, [&](const gdm::IterationLog& row) {
    if (a.quiet || (row.iteration + 1) % std::max(1, total / 10) != 0) return;
    std::cerr << "restart " << row.restart << " iteration " << row.iteration + 1 << "/" << total
              << " ce " << row.ce_loss << "\n";
  });
  gdm::write_run(cfg.output_dir, cfg, run);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "run finished in " << secs << " s; artifacts in " << cfg.output_dir << " (config "
            << gdm::hex64(run.config_hash) << ")\n";
  return 0;
}

struct EvalArgs {
  std::string run_dir;
  std::string interps;
  std::string model;
  std::string dataset;
  std::optional<int> reps;
  int threads = 1;
  bool skip_train = false;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  gdm::EvalRequest req;
  if (a.run_dir.empty() && (a.interps.empty() || a.model.empty()))
    throw gdm::ConfigError("eval: give --run or both --interps and --model");
  const std::filesystem::path dir = a.run_dir;
  req.interpretations = a.interps.empty() ? dir / "interpretations.json" : std::filesystem::path(a.interps);
  req.model = a.model.empty() ? dir / "model.json" : std::filesystem::path(a.model);
  if (!a.dataset.empty()) req.dataset = a.dataset;
  req.repetitions = a.reps;
  if (a.threads < 1) throw gdm::ConfigError("--threads: must be >= 1");
  req.threads = a.threads;
  req.skip_train = a.skip_train;

  const gdm::EvalOutput e = gdm::evaluate_run(req);
  const std::filesystem::path out = !a.out.empty() ? std::filesystem::path(a.out)
                                    : !a.run_dir.empty() ? dir
                                                         : req.model.parent_path();
  gdm::write_eval(out, e);
  const auto& r = e.report;
  std::cout << "fidelity " << r.fidelity.mean << " +- " << r.fidelity.std << "\n"
            << "utility " << r.utility.mean << " +- " << r.utility.std << "\n"
            << "predictive_accuracy " << r.predictive_accuracy.mean << "\n"
            << "mean_sparsity " << r.mean_sparsity << "\n"
            << "metrics written to " << (out / "metrics.json").string() << "\n";
  return 0;
}

int cmd_export(const std::string& interps, const std::string& format, const std::string& out) {
  const auto files = gdm::export_interpretations(interps, format, out);
  std::cout << "wrote " << files.size() << " file(s) to " << out << "\n";
  return 0;
}

int cmd_grad_check(std::uint64_t seed, int cases) {
  constexpr double kOpTolerance = 1e-4;
  int failures = 0;
  auto results = gdm::run_op_grad_checks(seed, cases);
  results.push_back(gdm::run_gcn_grad_check(seed));
  for (const auto& r : results) {
    const bool ok = r.worst < kOpTolerance;
    failures += ok ? 0 : 1;
    std::cout << (ok ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases, max rel err " << r.worst << ")\n";
  }
  std::cout << (failures == 0 ? "all gradient checks passed\n" : std::to_string(failures) + " check(s) failed\n");
  return failures == 0 ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global GNN interpretation by graph distribution matching"};
  app.require_subcommand(1);

  std::string gen_name, gen_out;
  int gen_n = 0;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as JSON");
  gen->add_option("dataset", gen_name, "ba-motif, ba-lrp or shape")->required();
  gen->add_option("n", gen_n, "Number of graphs")->required()->check(CLI::PositiveNumber);
  gen->add_option("seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output file (default <dataset>.json)");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Train a model and synthesize interpretations");
  run->add_option("--config", run_args.config, "Experiment config JSON")->required();
  run->add_option("--seed", run_args.seed, "Override the master seed");
  run->add_option("--out", run_args.out, "Override the output directory");
  run->add_option("--variant", run_args.variant, "full, first, last, ensemble or frozen");
  run->add_option("--graphs-per-class", run_args.graphs_per_class, "Override graphs per class");
  run->add_flag("--quiet", run_args.quiet, "No progress output");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score interpretations with the surrogate protocol");
  eval->add_option("--run", eval_args.run_dir, "Run directory (interpretations.json, model.json)");
  eval->add_option("--interps", eval_args.interps, "Interpretations file");
  eval->add_option("--model", eval_args.model, "Model checkpoint");
  eval->add_option("--dataset", eval_args.dataset, "Dataset JSON or TU directory (default: from the run config)");
  eval->add_option("--reps", eval_args.reps, "Repetitions (default: from the run config)");
  eval->add_option("--threads", eval_args.threads, "Worker threads for repetitions");
  eval->add_flag("--skip-train", eval_args.skip_train, "Use the target model as its own surrogate");
  eval->add_option("--out", eval_args.out, "Output directory for metrics.json/metrics.csv");

  std::string ex_interps, ex_format = "dot", ex_out;
  auto* exp = app.add_subcommand("export", "Write discretized interpretations as DOT or JSON");
  exp->add_option("--interps", ex_interps, "Interpretations file")->required();
  exp->add_option("--format", ex_format, "dot or json");
  exp->add_option("--out", ex_out, "Output directory")->required();

  std::uint64_t gc_seed = 0;
  int gc_cases = 100;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference checks of every differentiable op");
  gc->add_option("--seed", gc_seed, "Seed for the random inputs");
  gc->add_option("--cases", gc_cases, "Random cases per op")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_name, gen_n, gen_seed, gen_out);
    if (run->parsed()) return cmd_run(run_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (exp->parsed()) return cmd_export(ex_interps, ex_format, ex_out);
    if (gc->parsed()) return cmd_grad_check(gc_seed, gc_cases);
  } catch (const gdm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
