#ifndef LOSSTUNNEL_ARTIFACTS_HPP
#define LOSSTUNNEL_ARTIFACTS_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "losstunnel/dataset.hpp"
#include "losstunnel/inference.hpp"
#include "losstunnel/mlp.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::io {

using json = nlohmann::ordered_json;

json toJson(const mlp::MlpSpec& spec);
mlp::MlpSpec mlpSpecFromJson(const json& j);

/// Writes text via a temp file + rename so readers never observe partial
/// output.
void atomicWriteText(const std::filesystem::path& path, const std::string& content);

/// Optimized-curve checkpoint. The JSON header carries degree, dimension,
/// model layout, seed and metadata; the control-point matrix is row-major
/// 64-bit little-endian floats, either in a .bin sidecar or inline base64
/// ("portable" mode).
struct Checkpoint {
  Matrix control;
  mlp::MlpSpec spec;
  bool bias_sorted = false;
  bool includes_log_sigma = true;
  std::uint64_t seed = 0;
  json metadata;
};

void saveCheckpoint(const std::filesystem::path& json_path, const Checkpoint& ckpt,
                    bool portable = false);
Checkpoint loadCheckpoint(const std::filesystem::path& json_path);

mlp::Mlp modelFromCheckpoint(const Checkpoint& ckpt);

/// Self-contained tunnel description: basis, frame table, curve and the
/// content hash of the checkpoint it was built from.
struct TunnelArtifact {
  Checkpoint checkpoint;  // embedded curve + model description
  tunnel::SubspaceBasis basis;
  tunnel::FrameTable table;
  double total_arc_length = 0.0;
  std::string checkpoint_hash;
};

void saveTunnelArtifact(const std::filesystem::path& path, const TunnelArtifact& artifact);
TunnelArtifact loadTunnelArtifact(const std::filesystem::path& path);

infer::Lifting liftingFromArtifact(const TunnelArtifact& artifact);

/// Draws as JSONL (one line per draw: chain, draw, coord, log_posterior).
void saveSamplesJsonl(const std::filesystem::path& path, const infer::SampleSet& samples);
infer::SampleSet loadSamplesJsonl(const std::filesystem::path& path);

/// Run manifest: config hash, input/output hashes, wall time.
struct ManifestBuilder {
  explicit ManifestBuilder(std::string command, json config);
  void addInput(const std::filesystem::path& path);
  void addOutput(const std::filesystem::path& path);
  void write(const std::filesystem::path& path, double wall_time_s) const;
  const std::string& configHash() const { return config_hash_; }

 private:
  json manifest_;
  std::string config_hash_;
};

/// Verifies that `path` still hashes to `expected`; throws StaleArtifactError
/// otherwise.
void verifyHash(const std::filesystem::path& path, const std::string& expected);

}  // namespace losstunnel::io

#endif
