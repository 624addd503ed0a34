#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "losstunnel/artifacts.hpp"
#include "losstunnel/hashing.hpp"
#include "losstunnel/rng.hpp"

using namespace losstunnel;
namespace fs = std::filesystem;
namespace nets = losstunnel::mlp;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("losstunnel_io_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

io::Checkpoint makeCheckpoint(std::uint64_t seed) {
  io::Checkpoint ckpt;
  ckpt.spec = {{3, 6, 1}, nets::Activation::kElu, nets::Task::kRegressionHomoscedastic};
  const nets::Mlp net(ckpt.spec);
  RngEngine rng = makeStream(seed, 0);
  ckpt.control.resize(4, net.dim());
  for (Index k = 0; k < 4; ++k) ckpt.control.row(k) = normalVector(rng, net.dim()).transpose();
  ckpt.seed = seed;
  ckpt.metadata = {{"note", "fixture"}};
  return ckpt;
}

}  // namespace

TEST_CASE("checkpoint: sidecar round trip is bit-exact") {
  TempDir tmp;
  const auto ckpt = makeCheckpoint(7);
  const fs::path path = tmp.path / "ckpt.json";
  io::saveCheckpoint(path, ckpt, false);
  CHECK(fs::exists(tmp.path / "ckpt.bin"));
  const auto loaded = io::loadCheckpoint(path);
  CHECK((loaded.control - ckpt.control).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.spec.layer_widths == ckpt.spec.layer_widths);
  CHECK(loaded.seed == ckpt.seed);
  CHECK(loaded.metadata.at("note") == "fixture");
}

TEST_CASE("checkpoint: portable round trip is bit-exact and self-contained") {
  TempDir tmp;
  const auto ckpt = makeCheckpoint(8);
  const fs::path path = tmp.path / "portable.json";
  io::saveCheckpoint(path, ckpt, true);
  CHECK_FALSE(fs::exists(tmp.path / "portable.bin"));
  const auto loaded = io::loadCheckpoint(path);
  CHECK((loaded.control - ckpt.control).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tunnel artifact: round trip preserves the lifting") {
  TempDir tmp;
  const auto ckpt = makeCheckpoint(9);
  io::TunnelArtifact artifact;
  artifact.checkpoint = ckpt;
  artifact.basis = tunnel::buildBasis(ckpt.control);
  artifact.table = tunnel::buildFrameTable(ckpt.control, artifact.basis, 200, 45.0);
  artifact.total_arc_length = bezier::totalArcLength(ckpt.control);
  artifact.checkpoint_hash = "deadbeef";

  const fs::path path = tmp.path / "tunnel.json";
  io::saveTunnelArtifact(path, artifact);
  const auto loaded = io::loadTunnelArtifact(path);
  CHECK(loaded.checkpoint_hash == "deadbeef");
  CHECK(loaded.basis.effective_rank == artifact.basis.effective_rank);
  CHECK((loaded.basis.projection - artifact.basis.projection).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.table.references.size() == artifact.table.references.size());

  const auto lift_a = io::liftingFromArtifact(artifact);
  const auto lift_b = io::liftingFromArtifact(loaded);
  RngEngine rng = makeStream(10, 0);
  const Vector xi = 0.5 * normalVector(rng, artifact.basis.effective_rank - 1);
  for (double t : {0.1, 0.5, 0.9}) {
    const auto coord = tunnel::TunnelCoordinate::time(t, xi);
    const Vector a = tunnel::lift(lift_a.table, lift_a.control, lift_a.basis, coord);
    const Vector b = tunnel::lift(lift_b.table, lift_b.control, lift_b.basis, coord);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("samples: jsonl round trip at full double precision") {
  TempDir tmp;
  infer::SampleSet set;
  RngEngine rng = makeStream(11, 0);
  for (int chain = 0; chain < 3; ++chain) {
    Matrix draws(5, 2);
    for (Index d = 0; d < 5; ++d) draws.row(d) = normalVector(rng, 2).transpose();
    set.coords.push_back(draws);
  }
  set.log_posterior.resize(3, 5);
  for (Index c = 0; c < 3; ++c) {
    for (Index d = 0; d < 5; ++d) set.log_posterior(c, d) = standardNormal(rng);
  }
  set.stats.resize(3);

  const fs::path path = tmp.path / "samples.jsonl";
  io::saveSamplesJsonl(path, set);
  const auto loaded = io::loadSamplesJsonl(path);
  REQUIRE(loaded.coords.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK((loaded.coords[c] - set.coords[c]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((loaded.log_posterior - set.log_posterior).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hash verification raises a stale-artifact error with both hashes") {
  TempDir tmp;
  const fs::path path = tmp.path / "file.txt";
  io::atomicWriteText(path, "payload");
  const std::string good = hashFile(path);
  io::verifyHash(path, good);  // no throw
  {
    std::ofstream out(path, std::ios::app);
    out << " tampered";
  }
  try {
    io::verifyHash(path, good);
    FAIL("expected StaleArtifactError");
  } catch (const StaleArtifactError& e) {
    CHECK(e.expected_hash == good);
    CHECK(e.actual_hash == hashFile(path));
    CHECK(e.expected_hash != e.actual_hash);
  }
}

TEST_CASE("atomic write replaces content without leaving temp files") {
  TempDir tmp;
  const fs::path path = tmp.path / "atomic.json";
  io::atomicWriteText(path, "first");
  io::atomicWriteText(path, "second");
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content == "second");
  CHECK_FALSE(fs::exists(tmp.path / "atomic.json.tmp"));
}

TEST_CASE("manifest: config hash is stable and inputs are recorded") {
  TempDir tmp;
  const fs::path input = tmp.path / "input.csv";
  io::atomicWriteText(input, "x,y\n1,2\n");
  io::ManifestBuilder builder("demo", io::json{{"alpha", 1}, {"beta", 2.5}});
  io::ManifestBuilder same("demo", io::json{{"alpha", 1}, {"beta", 2.5}});
  CHECK(builder.configHash() == same.configHash());
  builder.addInput(input);
  const fs::path manifest_path = tmp.path / "manifest.json";
  builder.write(manifest_path, 0.25);
  const auto j = io::json::parse(std::ifstream(manifest_path));
  CHECK(j.at("command") == "demo");
  CHECK(j.at("inputs").size() == 1);
  CHECK(j.at("config_hash") == builder.configHash());
}
