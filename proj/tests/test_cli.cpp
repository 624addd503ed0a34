#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "losstunnel/artifacts.hpp"
#include "losstunnel/diagnostics.hpp"
#include "losstunnel/rng.hpp"

using namespace losstunnel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string binaryPath() {
  const char* env = std::getenv("LOSSTUNNEL_BIN");
  REQUIRE_MESSAGE(env != nullptr, "LOSSTUNNEL_BIN must point at the CLI binary");
  return env;
}

int run(const std::string& args) {
  const std::string cmd = binaryPath() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("losstunnel_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

void writeTrainConfig(const fs::path& path, int degree, int epochs, std::uint64_t seed) {
  json config;
  config["schema_version"] = 1;
  config["model"] = {{"layer_widths", {3, 8, 1}}, {"activation", "elu"}};
  config["degree"] = degree;
  config["learning_rate"] = 0.005;
  config["epochs"] = epochs;
  config["early_stop"] = {{"grid_points", 100}, {"eval_every", 5}};
  config["seed"] = seed;
  std::ofstream out(path);
  out << config.dump(2);
}

}  // namespace

TEST_CASE("gen-data: deterministic bytes and the documented counts") {
  Workspace ws;
  REQUIRE(run("gen-data --seed 7 --out " + (ws / "a")) == 0);
  REQUIRE(run("gen-data --seed 7 --out " + (ws / "b")) == 0);
  for (const char* name : {"train.csv", "val.csv", "test.csv"}) {
    CHECK(slurp(ws.root / "a" / name) == slurp(ws.root / "b" / name));
  }
  // 70/18/33 data rows plus a header line each
  const auto count_lines = [&](const fs::path& p) {
    const std::string content = slurp(p);
    return std::count(content.begin(), content.end(), '\n');
  };
  CHECK(count_lines(ws.root / "a" / "train.csv") == 71);
  CHECK(count_lines(ws.root / "a" / "val.csv") == 19);
  CHECK(count_lines(ws.root / "a" / "test.csv") == 34);
  // second invocation with identical config is an up-to-date no-op
  REQUIRE(run("gen-data --seed 7 --out " + (ws / "a")) == 0);
}

TEST_CASE("full pipeline: deterministic metrics and both lifting priors") {
  Workspace ws;
  REQUIRE(run("gen-data --seed 11 --out " + (ws / "data")) == 0);
  writeTrainConfig(ws.root / "train.json", 5, 150, 11);

  REQUIRE(run("train-path --config " + (ws / "train.json") + " --data " + (ws / "data") +
              " --out " + (ws / "run")) == 0);
  CHECK(fs::exists(ws.root / "run" / "ckpt.json"));
  CHECK(fs::exists(ws.root / "run" / "ckpt.bin"));
  CHECK(fs::exists(ws.root / "run" / "trace.csv"));

  REQUIRE(run("build-tunnel --ckpt " + (ws / "run/ckpt.json") + " --out " + (ws / "tun")) == 0);

  const std::string sample_common = " --data " + (ws / "data") + " --tunnel " +
                                    (ws / "tun/tunnel.json") +
                                    " --chains 2 --warmup 200 --draws 200 --seed 5";
  REQUIRE(run("sample --prior tunnel-s --temp 10" + sample_common + " --out " + (ws / "smp_s")) == 0);
  REQUIRE(run("sample --prior volume --temp 10" + sample_common + " --out " + (ws / "smp_v")) == 0);
  CHECK(fs::exists(ws.root / "smp_s" / "samples.jsonl"));
  CHECK(fs::exists(ws.root / "smp_v" / "sample_summary.json"));

  // both runs produce the diagnostics that feed the lifting comparison
  for (const char* dir : {"smp_s", "smp_v"}) {
    const json summary = json::parse(slurp(ws.root / dir / "sample_summary.json"));
    CHECK(summary.contains("ess_per_dim"));
    CHECK(summary.contains("rhat_per_dim"));
    CHECK(summary.at("ess_per_dim").size() == 5);  // rank of 6 centered control points
  }

  REQUIRE(run("evaluate --samples " + (ws / "smp_s") + " --tunnel " + (ws / "tun/tunnel.json") +
              " --data " + (ws / "data") + " --out " + (ws / "eval_a")) == 0);

  // rerunning the whole chain into fresh directories reproduces the metrics
  REQUIRE(run("train-path --config " + (ws / "train.json") + " --data " + (ws / "data") +
              " --out " + (ws / "run2")) == 0);
  REQUIRE(run("build-tunnel --ckpt " + (ws / "run2/ckpt.json") + " --out " + (ws / "tun2")) == 0);
  REQUIRE(run("sample --prior tunnel-s --temp 10 --data " + (ws / "data") + " --tunnel " +
              (ws / "tun2/tunnel.json") + " --chains 2 --warmup 200 --draws 200 --seed 5 --out " +
              (ws / "smp_s2")) == 0);
  REQUIRE(run("evaluate --samples " + (ws / "smp_s2") + " --tunnel " + (ws / "tun2/tunnel.json") +
              " --data " + (ws / "data") + " --out " + (ws / "eval_b")) == 0);
  CHECK(slurp(ws.root / "eval_a" / "metrics.json") == slurp(ws.root / "eval_b" / "metrics.json"));
  CHECK(slurp(ws.root / "smp_s" / "samples.jsonl") == slurp(ws.root / "smp_s2" / "samples.jsonl"));
}

TEST_CASE("diagnose: iid fixture recovers the draw count") {
  Workspace ws;
  infer::SampleSet set;
  RngEngine rng = makeStream(3, 0);
  const int draws = 2000;
  for (int chain = 0; chain < 2; ++chain) {
    Matrix m(draws, 2);
    for (Index d = 0; d < draws; ++d) m.row(d) = normalVector(rng, 2).transpose();
    set.coords.push_back(m);
  }
  set.log_posterior = Matrix::Zero(2, draws);
  set.stats.resize(2);
  io::saveSamplesJsonl(ws.root / "fixture.jsonl", set);

  REQUIRE(run("diagnose --samples " + (ws / "fixture.jsonl") + " --out " + (ws / "diag")) == 0);
  const json report = json::parse(slurp(ws.root / "diag" / "diagnostics.json"));
  const double total = 2.0 * draws;
  CHECK(report.at("ess_mean").get<double>() > 0.9 * total);
  CHECK(report.at("ess_mean").get<double>() < 1.1 * total);
  CHECK(report.at("rhat_mean").get<double>() < 1.01);
}

TEST_CASE("simulate-polymer: trace columns and determinism") {
  Workspace ws;
  {
    std::ofstream out(ws.root / "poly.json");
    out << R"({"degree": 4, "dim": 8, "steps": 500, "repetitions": 5, "record_stride": 100, "seed": 2})";
  }
  REQUIRE(run("simulate-polymer --config " + (ws / "poly.json") + " --out " + (ws / "p1")) == 0);
  REQUIRE(run("simulate-polymer --config " + (ws / "poly.json") + " --out " + (ws / "p2")) == 0);
  const std::string a = slurp(ws.root / "p1" / "trace.csv");
  CHECK(a == slurp(ws.root / "p2" / "trace.csv"));
  CHECK(a.rfind("step,eff_time,com,re,rg,lambda_k,s,", 0) == 0);
}

TEST_CASE("exit codes: config, data, and stale-artifact errors") {
  Workspace ws;
  {
    std::ofstream out(ws.root / "bad.json");
    out << "{not json";
  }
  CHECK(run("gen-data --config " + (ws / "bad.json") + " --out " + (ws / "x")) == 2);
  CHECK(run("train-path --data " + (ws / "missing") + " --out " + (ws / "y")) == 3);

  REQUIRE(run("gen-data --seed 3 --out " + (ws / "data")) == 0);
  writeTrainConfig(ws.root / "train.json", 3, 40, 3);
  REQUIRE(run("train-path --config " + (ws / "train.json") + " --data " + (ws / "data") +
              " --out " + (ws / "run")) == 0);
  REQUIRE(run("build-tunnel --ckpt " + (ws / "run/ckpt.json") + " --out " + (ws / "tun")) == 0);
  REQUIRE(run("sample --prior tunnel-t --data " + (ws / "data") + " --tunnel " +
              (ws / "tun/tunnel.json") + " --chains 2 --warmup 100 --draws 50 --seed 1 --out " +
              (ws / "smp")) == 0);

  // tampering with the tunnel artifact breaks the recorded chain
  {
    std::ofstream out(ws.root / "tun" / "tunnel.json", std::ios::app);
    out << " ";
  }
  CHECK(run("evaluate --samples " + (ws / "smp") + " --tunnel " + (ws / "tun/tunnel.json") +
            " --data " + (ws / "data")) == 4);

  // tampering with the checkpoint sidecar is caught by the next consumer
  {
    std::ofstream out(ws.root / "run" / "ckpt.bin", std::ios::app);
    out << "x";
  }
  CHECK(run("build-tunnel --ckpt " + (ws / "run/ckpt.json") + " --out " + (ws / "tun3")) == 4);
}

TEST_CASE("portable checkpoints round-trip through the pipeline") {
  Workspace ws;
  REQUIRE(run("gen-data --seed 5 --out " + (ws / "data")) == 0);
  writeTrainConfig(ws.root / "train.json", 3, 40, 5);
  REQUIRE(run("train-path --portable --config " + (ws / "train.json") + " --data " + (ws / "data") +
              " --out " + (ws / "run")) == 0);
  CHECK_FALSE(fs::exists(ws.root / "run" / "ckpt.bin"));
  REQUIRE(run("build-tunnel --ckpt " + (ws / "run/ckpt.json") + " --out " + (ws / "tun")) == 0);
}
