#include "gdm/io.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = GDM_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gdm_test_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "'" + kCli.string() + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string config_for(const fs::path& dataset, const std::string& extra = "") {
  return R"({"dataset": {"file": ")" + dataset.string() + R"("}, "seed": 4, "repetitions": 2, "eval_epochs": 5,)" +
         extra + R"( "gdm": {"graphs_per_class": 2, "iterations": 4, "restarts": 1, "hidden_dim": 16, "train_batch": 8}})";
}

}  // namespace

TEST_CASE("gen-data, run and eval are deterministic end to end", "[cli]") {
  TempDir tmp;
  const fs::path& d = tmp.path;
  const fs::path log = d / "log.txt";
  REQUIRE(run_cli("gen-data ba-motif 40 9 --out '" + (d / "a.json").string() + "'", log) == 0);
  REQUIRE(run_cli("gen-data ba-motif 40 9 --out '" + (d / "b.json").string() + "'", log) == 0);
  CHECK(slurp(d / "a.json") == slurp(d / "b.json"));

  write(d / "config.json", config_for(d / "a.json"));
  for (const char* name : {"r1", "r2"}) {
    REQUIRE(run_cli("run --quiet --config '" + (d / "config.json").string() + "' --out '" + (d / name).string() + "'", log) == 0);
    REQUIRE(run_cli("eval --run '" + (d / name).string() + "' --out '" + (d / name / "eval").string() + "'", log) == 0);
  }
  for (const char* f : {"interpretations.json", "train_log.csv", "eval/metrics.csv"}) {
    INFO(f);
    CHECK(slurp(d / "r1" / f) == slurp(d / "r2" / f));
  }
  // the two runs differ only in where they were written
  for (const char* f : {"model.json", "eval/metrics.json"}) {
    INFO(f);
    gdm::Json a = gdm::read_json_file(d / "r1" / f), b = gdm::read_json_file(d / "r2" / f);
    a["config"].erase("output_dir");
    b["config"].erase("output_dir");
    CHECK(a.dump() == b.dump());
  }
  const gdm::Json metrics = gdm::read_json_file(d / "r1" / "eval" / "metrics.json");
  CHECK(metrics.at("fidelity").at("runs").size() == 2);

  REQUIRE(run_cli("eval --skip-train --run '" + (d / "r1").string() + "' --out '" + (d / "skip").string() + "'", log) == 0);
  CHECK(gdm::read_json_file(d / "skip" / "metrics.json").at("fidelity").at("mean") == 100.0);

  REQUIRE(run_cli("export --interps '" + (d / "r1" / "interpretations.json").string() + "' --format dot --out '" +
                      (d / "dot").string() + "'",
                  log) == 0);
  int dots = 0;
  for (const auto& e : fs::directory_iterator(d / "dot")) {
    ++dots;
    const std::string text = slurp(e.path());
    CHECK(text.rfind("graph ", 0) == 0);
    CHECK(text.find("--") != std::string::npos);
    CHECK(text.substr(text.size() - 2) == "}\n");
  }
  CHECK(dots == 4);
}

TEST_CASE("cli exit codes", "[cli]") {
  TempDir tmp;
  const fs::path& d = tmp.path;
  const fs::path log = d / "log.txt";

  CHECK(run_cli("gen-data ba-house 10 1 --out '" + (d / "x.json").string() + "'", log) == 2);
  CHECK(slurp(log).find("ba-motif") != std::string::npos);
  CHECK(run_cli("frobnicate", log) == 2);
  CHECK(run_cli("run", log) == 2);

  REQUIRE(run_cli("gen-data ba-motif 40 9 --out '" + (d / "a.json").string() + "'", log) == 0);
  write(d / "unknown.json", config_for(d / "a.json", R"( "learning_rate": 3,)"));
  CHECK(run_cli("run --quiet --config '" + (d / "unknown.json").string() + "' --out '" + (d / "r").string() + "'", log) == 2);
  CHECK(slurp(log).find("config.learning_rate") != std::string::npos);
  write(d / "broken.json", "{\"seed\": ");
  CHECK(run_cli("run --quiet --config '" + (d / "broken.json").string() + "'", log) == 2);
  CHECK(run_cli("run --quiet --config '" + (d / "missing.json").string() + "'", log) == 2);

  write(d / "config.json", config_for(d / "a.json"));
  REQUIRE(run_cli("run --quiet --config '" + (d / "config.json").string() + "' --out '" + (d / "r").string() + "'", log) == 0);
  REQUIRE(run_cli("gen-data ba-motif 40 10 --out '" + (d / "other.json").string() + "'", log) == 0);
  CHECK(run_cli("eval --run '" + (d / "r").string() + "' --dataset '" + (d / "other.json").string() + "'", log) == 1);
  CHECK(slurp(log).find("fingerprint") != std::string::npos);
  CHECK(run_cli("eval --run '" + (d / "nowhere").string() + "'", log) == 1);
  CHECK(run_cli("export --interps '" + (d / "r" / "interpretations.json").string() + "' --format png --out '" +
                    (d / "png").string() + "'",
                log) == 2);
}

TEST_CASE("grad-check subcommand passes", "[cli]") {
  TempDir tmp;
  CHECK(run_cli("grad-check --cases 20", tmp.path / "log.txt") == 0);
  CHECK(slurp(tmp.path / "log.txt").find("PASS") != std::string::npos);
}
