#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Pulls a top-level numeric field out of a JSON report by key.
double json_number(const std::string& text, const std::string& key) {
  const std::string needle = "\"" + key + "\":";
  const std::size_t at = text.find(needle);
  REQUIRE(at != std::string::npos);
  return std::strtod(text.c_str() + at + needle.size(), nullptr);
}

/// Runs the installed CLI with the given arguments, capturing exit code and
/// combined stdout/stderr.
CmdResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path log = fs::temp_directory_path() / ("simcse_cli_out_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(SIMCSE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CmdResult result;
  result.code = (raw == -1) ? -1 : WEXITSTATUS(raw);
  result.output = slurp(log);
  fs::remove(log);
  return result;
}

/// Scratch directory shared by the cases below; prepared once with a small
/// generated corpus and one short training run.
const fs::path& scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "simcse_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const fs::path& toy_dir() {
  static const fs::path dir = [] {
    const fs::path d = scratch() / "toy";
    const CmdResult r = run_cli("gen-toy --out " + d.string() +
                                " --seed 1 --clusters 4 --per-cluster 12 --vocab 64");
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

std::string train_config_json() {
  return R"({
  "batch_size": 8,
  "lr": 0.001,
  "max_steps": 6,
  "steps_per_eval": 3,
  "seed": 3,
  "probe_pairs": 32,
  "encoder": {"d_model": 8, "n_layers": 1, "n_heads": 2, "d_ff": 16, "max_len": 12},
  "data": {"corpus": "toy/corpus.txt", "triplets": "toy/nli.tsv", "probes": "toy/probes.json"}
})";
}

const fs::path& config_path() {
  static const fs::path path = [] {
    toy_dir();
    const fs::path p = scratch() / "config.json";
    spit(p, train_config_json());
    return p;
  }();
  return path;
}

const fs::path& run_dir() {
  static const fs::path dir = [] {
    const fs::path d = scratch() / "run";
    const CmdResult r =
        run_cli("train --config " + config_path().string() + " --out " + d.string());
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("bare invocation and unknown flags are validation failures") {
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("train --help").code == 0);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("train --config x.json").code == 1);  // missing --out
  const CmdResult bad = run_cli("train --config x.json --out y --dropout-mode bogus");
  CHECK(bad.code == 1);
}

TEST_CASE("gen-toy writes the corpus bundle and rejects an undersized vocabulary") {
  const fs::path& d = toy_dir();
  CHECK(fs::exists(d / "corpus.txt"));
  CHECK(fs::exists(d / "nli.tsv"));
  CHECK(fs::exists(d / "probes.json"));
  CHECK(fs::exists(d / "probe_a.tsv"));
  CHECK(fs::exists(d / "probe_b.tsv"));
  CHECK(fs::exists(d / "effective_config.json"));

  int lines = 0;
  std::istringstream corpus(slurp(d / "corpus.txt"));
  for (std::string line; std::getline(corpus, line);) ++lines;
  CHECK(lines == 48);

  const CmdResult tiny =
      run_cli("gen-toy --out " + (scratch() / "bad_toy").string() + " --clusters 8 --vocab 8");
  CHECK(tiny.code == 1);
}

TEST_CASE("train produces a checkpoint, a trajectory, and an effective config") {
  const fs::path& d = run_dir();
  CHECK(fs::exists(d / "checkpoint.bin"));
  CHECK(fs::exists(d / "effective_config.json"));
  const std::string csv = slurp(d / "trajectory.csv");
  CHECK(csv.rfind("step,loss,align,uniform,sigma_max_ratio\n", 0) == 0);
  CHECK(csv.find("\n6,") != std::string::npos);
  CHECK(slurp(d / "effective_config.json").find("\"unsup_dropout\"") != std::string::npos);
}

TEST_CASE("a repeated train run is byte-identical") {
  const fs::path rerun = scratch() / "rerun";
  const CmdResult r =
      run_cli("train --config " + config_path().string() + " --out " + rerun.string());
  REQUIRE(r.code == 0);
  CHECK(slurp(rerun / "checkpoint.bin") == slurp(run_dir() / "checkpoint.bin"));
  CHECK(slurp(rerun / "trajectory.csv") == slurp(run_dir() / "trajectory.csv"));
}

TEST_CASE("flag overrides beat the config file") {
  const fs::path other = scratch() / "override";
  const CmdResult r = run_cli("train --config " + config_path().string() + " --out " +
                              other.string() + " --seed 4 --steps 2");
  REQUIRE(r.code == 0);
  const std::string echo = slurp(other / "effective_config.json");
  CHECK(echo.find("\"seed\": 4") != std::string::npos);
  CHECK(echo.find("\"max_steps\": 2") != std::string::npos);
  CHECK(slurp(other / "checkpoint.bin") != slurp(run_dir() / "checkpoint.bin"));
}

TEST_CASE("eval-sts prints a table and can write stable json") {
  const std::string base = "eval-sts --checkpoint " + (run_dir() / "checkpoint.bin").string() +
                           " --manifest " + (toy_dir() / "probes.json").string();
  const CmdResult shown = run_cli(base);
  REQUIRE(shown.code == 0);
  CHECK(shown.output.find("Avg.") != std::string::npos);
  CHECK(shown.output.find("probe_a") != std::string::npos);

  const fs::path j1 = scratch() / "eval1.json";
  const fs::path j2 = scratch() / "eval2.json";
  REQUIRE(run_cli(base + " --json " + j1.string()).code == 0);
  REQUIRE(run_cli(base + " --json " + j2.string()).code == 0);
  const std::string text = slurp(j1);
  CHECK(text.find("\"aggregate\"") != std::string::npos);
  CHECK(text.find("\"spearman\"") != std::string::npos);
  CHECK(text == slurp(j2));
}

TEST_CASE("eval-sts rejects a corrupt or missing checkpoint with exit code 1") {
  const fs::path garbage = scratch() / "garbage.bin";
  spit(garbage, "not a checkpoint");
  const std::string manifest = (toy_dir() / "probes.json").string();
  CHECK(run_cli("eval-sts --checkpoint " + garbage.string() + " --manifest " + manifest).code == 1);
  CHECK(run_cli("eval-sts --checkpoint " + (scratch() / "absent.bin").string() + " --manifest " +
                manifest)
            .code == 1);
}

TEST_CASE("analyze writes a diagnostics report and a density table") {
  const fs::path out = scratch() / "analysis";
  const CmdResult r = run_cli("analyze --checkpoint " + (run_dir() / "checkpoint.bin").string() +
                              " --probes " + (toy_dir() / "probes.json").string() + " --out " +
                              out.string());
  REQUIRE(r.code == 0);
  const std::string report = slurp(out / "analysis.json");
  CHECK(report.find("\"align\"") != std::string::npos);
  CHECK(report.find("\"uniform\"") != std::string::npos);
  CHECK(report.find("\"sigma_max_ratio\"") != std::string::npos);
  const std::string density = slurp(out / "density.csv");
  CHECK(density.rfind("band,bin_left,bin_right,count\n", 0) == 0);
}

TEST_CASE("analyze reports better uniformity for a trained checkpoint") {
  const fs::path toy2 = scratch() / "toy2";
  REQUIRE(run_cli("gen-toy --out " + toy2.string() +
                  " --seed 2 --clusters 6 --per-cluster 25 --vocab 128")
              .code == 0);
  const fs::path cfg = scratch() / "uniform_config.json";
  spit(cfg, R"({
  "batch_size": 16,
  "lr": 0.001,
  "max_steps": 150,
  "steps_per_eval": 50,
  "seed": 3,
  "probe_pairs": 64,
  "encoder": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_len": 16},
  "data": {"corpus": "toy2/corpus.txt", "triplets": "toy2/nli.tsv", "probes": "toy2/probes.json"}
})");
  // lr 0 leaves the parameters at initialization, producing an untrained
  // checkpoint through the same code path as the trained one.
  const fs::path untrained = scratch() / "uniform_untrained";
  const fs::path trained = scratch() / "uniform_trained";
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + untrained.string() +
                  " --lr 0 --steps 1")
              .code == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + trained.string()).code == 0);

  auto uniform_of = [&](const fs::path& run, const std::string& tag) {
    const fs::path out = scratch() / ("uniform_an_" + tag);
    REQUIRE(run_cli("analyze --checkpoint " + (run / "checkpoint.bin").string() + " --probes " +
                    (toy2 / "probes.json").string() + " --out " + out.string())
                .code == 0);
    return json_number(slurp(out / "analysis.json"), "uniform");
  };
  CHECK(uniform_of(trained, "trained") < uniform_of(untrained, "untrained"));
}

TEST_CASE("augment rewrites the corpus line for line") {
  const fs::path out = scratch() / "augmented.txt";
  const CmdResult r = run_cli("augment --in " + (toy_dir() / "corpus.txt").string() + " --out " +
                              out.string() + " --op crop --k 40 --seed 9");
  REQUIRE(r.code == 0);
  // The corpus output has no header, so the effective settings land on stdout.
  CHECK(r.output.find("op=crop k=40 seed=9") != std::string::npos);
  int in_lines = 0;
  int out_lines = 0;
  std::istringstream original(slurp(toy_dir() / "corpus.txt"));
  for (std::string line; std::getline(original, line);) ++in_lines;
  std::istringstream rewritten(slurp(out));
  for (std::string line; std::getline(rewritten, line);) ++out_lines;
  CHECK(in_lines == out_lines);
  CHECK(slurp(out) != slurp(toy_dir() / "corpus.txt"));

  const CmdResult missing_table =
      run_cli("augment --in " + (toy_dir() / "corpus.txt").string() + " --out " + out.string() +
              " --op synonym_replace");
  CHECK(missing_table.code == 1);
}

TEST_CASE("train objectives that need missing data fail validation") {
  const fs::path cfg = scratch() / "sup_config.json";
  spit(cfg, R"({
  "batch_size": 8,
  "max_steps": 2,
  "objective": "supervised",
  "encoder": {"d_model": 8, "n_layers": 1, "n_heads": 2, "d_ff": 16, "max_len": 12},
  "data": {"corpus": "toy/corpus.txt", "probes": "toy/probes.json"}
})");
  toy_dir();
  const CmdResult r =
      run_cli("train --config " + cfg.string() + " --out " + (scratch() / "sup_run").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("triplets") != std::string::npos);
}
