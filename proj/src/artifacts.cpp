#include "losstunnel/artifacts.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "losstunnel/hashing.hpp"

namespace losstunnel::io {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr int kTunnelVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint sidecar assumes a little-endian host");

std::string base64Encode(const std::string& bytes) {
  static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 2 < bytes.size()) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += alphabet[v & 63];
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64Decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw DataError("invalid base64 character");
  };
  std::string out;
  std::uint32_t buffer = 0;
  int bits = 0;
  for (char c : text) {
    const int v = value_of(c);
    if (v < 0) break;
    buffer = (buffer << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((buffer >> bits) & 0xff);
    }
  }
  return out;
}

std::string matrixBytes(const Matrix& m) {
  // row-major doubles
  std::string bytes(static_cast<std::size_t>(m.size()) * sizeof(double), '\0');
  char* dst = bytes.data();
  for (Index i = 0; i < m.rows(); ++i) {
    std::memcpy(dst, m.row(i).eval().data(), static_cast<std::size_t>(m.cols()) * sizeof(double));
    dst += static_cast<std::size_t>(m.cols()) * sizeof(double);
  }
  return bytes;
}

Matrix matrixFromBytes(const std::string& bytes, Index rows, Index cols) {
  if (bytes.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * sizeof(double)) {
    throw DataError("control-point payload has unexpected size");
  }
  Matrix m(rows, cols);
  const char* src = bytes.data();
  for (Index i = 0; i < rows; ++i) {
    Vector row(cols);
    std::memcpy(row.data(), src, static_cast<std::size_t>(cols) * sizeof(double));
    m.row(i) = row.transpose();
    src += static_cast<std::size_t>(cols) * sizeof(double);
  }
  return m;
}

json vectorToJson(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vectorFromJson(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].get<double>();
  return v;
}

json matrixToJsonFlat(const Matrix& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

Matrix matrixFromJsonFlat(const json& j, Index rows, Index cols) {
  if (static_cast<Index>(j.size()) != rows * cols) throw DataError("flat matrix size mismatch");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < cols; ++c) m(i, c) = j[k++].get<double>();
  }
  return m;
}

json loadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

json toJson(const mlp::MlpSpec& spec) {
  return json{{"layer_widths", spec.layer_widths},
              {"activation", mlp::toString(spec.activation)},
              {"task", mlp::toString(spec.task)}};
}

mlp::MlpSpec mlpSpecFromJson(const json& j) {
  mlp::MlpSpec spec;
  spec.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  spec.activation = mlp::activationFromString(j.at("activation").get<std::string>());
  spec.task = mlp::taskFromString(j.at("task").get<std::string>());
  return spec;
}

void atomicWriteText(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void saveCheckpoint(const std::filesystem::path& json_path, const Checkpoint& ckpt, bool portable) {
  json header;
  header["format"] = "bezier-checkpoint";
  header["version"] = kCheckpointVersion;
  header["K"] = static_cast<long>(ckpt.control.rows()) - 1;
  header["D"] = static_cast<long>(ckpt.control.cols());
  header["layout"] = toJson(ckpt.spec);
  header["layout"]["bias_sorted"] = ckpt.bias_sorted;
  header["layout"]["includes_log_sigma"] = ckpt.includes_log_sigma;
  header["seed"] = ckpt.seed;
  header["metadata"] = ckpt.metadata.is_null() ? json::object() : ckpt.metadata;

  const std::string payload = matrixBytes(ckpt.control);
  if (portable) {
    header["data"] = {{"encoding", "base64"}, {"base64", base64Encode(payload)}};
    atomicWriteText(json_path, header.dump(2) + "\n");
    return;
  }
  std::filesystem::path bin_path = json_path;
  bin_path.replace_extension(".bin");
  header["data"] = {{"encoding", "sidecar"}, {"file", bin_path.filename().string()}};
  atomicWriteText(bin_path, payload);
  atomicWriteText(json_path, header.dump(2) + "\n");
}

Checkpoint loadCheckpoint(const std::filesystem::path& json_path) {
  const json header = loadJsonFile(json_path);
  if (header.value("format", "") != "bezier-checkpoint") {
    throw DataError("not a checkpoint file: " + json_path.string());
  }
  if (header.value("version", 0) != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version in " + json_path.string());
  }
  Checkpoint ckpt;
  const auto rows = header.at("K").get<Index>() + 1;
  const auto cols = header.at("D").get<Index>();
  ckpt.spec = mlpSpecFromJson(header.at("layout"));
  ckpt.bias_sorted = header.at("layout").value("bias_sorted", false);
  ckpt.includes_log_sigma = header.at("layout").value("includes_log_sigma", true);
  ckpt.seed = header.value("seed", std::uint64_t{0});
  ckpt.metadata = header.value("metadata", json::object());

  const json& data = header.at("data");
  std::string payload;
  if (data.value("encoding", "") == "base64") {
    payload = base64Decode(data.at("base64").get<std::string>());
  } else {
    const std::filesystem::path bin_path =
        json_path.parent_path() / data.at("file").get<std::string>();
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint sidecar: " + bin_path.string());
    payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  ckpt.control = matrixFromBytes(payload, rows, cols);
  return ckpt;
}

mlp::Mlp modelFromCheckpoint(const Checkpoint& ckpt) {
  return mlp::Mlp(ckpt.spec, ckpt.bias_sorted, ckpt.includes_log_sigma);
}

void saveTunnelArtifact(const std::filesystem::path& path, const TunnelArtifact& artifact) {
  json j;
  j["format"] = "tunnel-artifact";
  j["version"] = kTunnelVersion;
  j["checkpoint_hash"] = artifact.checkpoint_hash;
  j["curve"] = {{"K", static_cast<long>(artifact.checkpoint.control.rows()) - 1},
                {"D", static_cast<long>(artifact.checkpoint.control.cols())},
                {"layout", toJson(artifact.checkpoint.spec)},
                {"control_base64", base64Encode(matrixBytes(artifact.checkpoint.control))}};
  j["curve"]["layout"]["bias_sorted"] = artifact.checkpoint.bias_sorted;
  j["curve"]["layout"]["includes_log_sigma"] = artifact.checkpoint.includes_log_sigma;
  j["total_arc_length"] = artifact.total_arc_length;
  j["basis"] = {{"mean", vectorToJson(artifact.basis.mean)},
                {"projection", matrixToJsonFlat(artifact.basis.projection)},
                {"effective_rank", artifact.basis.effective_rank},
                {"singular_values", vectorToJson(artifact.basis.singular_values)},
                {"rank_deficient", artifact.basis.rank_deficient}};
  json refs = json::array();
  for (const auto& frame : artifact.table.references) {
    refs.push_back({{"t_ref", frame.t_ref},
                    {"tangent", vectorToJson(frame.tangent)},
                    {"normals", matrixToJsonFlat(frame.normals)},
                    {"completed", frame.completed}});
  }
  j["frame_table"] = {{"resolution", artifact.table.resolution},
                      {"angle_threshold", artifact.table.angle_threshold},
                      {"references", refs}};
  atomicWriteText(path, j.dump() + "\n");
}

TunnelArtifact loadTunnelArtifact(const std::filesystem::path& path) {
  const json j = loadJsonFile(path);
  if (j.value("format", "") != "tunnel-artifact") {
    throw DataError("not a tunnel artifact: " + path.string());
  }
  if (j.value("version", 0) != kTunnelVersion) {
    throw DataError("unsupported tunnel artifact version in " + path.string());
  }
  TunnelArtifact artifact;
  artifact.checkpoint_hash = j.value("checkpoint_hash", "");
  const json& curve = j.at("curve");
  const auto rows = curve.at("K").get<Index>() + 1;
  const auto cols = curve.at("D").get<Index>();
  artifact.checkpoint.spec = mlpSpecFromJson(curve.at("layout"));
  artifact.checkpoint.bias_sorted = curve.at("layout").value("bias_sorted", false);
  artifact.checkpoint.includes_log_sigma = curve.at("layout").value("includes_log_sigma", true);
  artifact.checkpoint.control =
      matrixFromBytes(base64Decode(curve.at("control_base64").get<std::string>()), rows, cols);
  artifact.total_arc_length = j.at("total_arc_length").get<double>();

  const json& basis = j.at("basis");
  artifact.basis.mean = vectorFromJson(basis.at("mean"));
  artifact.basis.effective_rank = basis.at("effective_rank").get<Index>();
  artifact.basis.projection = matrixFromJsonFlat(basis.at("projection"), artifact.basis.mean.size(),
                                                 artifact.basis.effective_rank);
  artifact.basis.singular_values = vectorFromJson(basis.at("singular_values"));
  artifact.basis.rank_deficient = basis.value("rank_deficient", false);

  const json& table = j.at("frame_table");
  artifact.table.resolution = table.at("resolution").get<int>();
  artifact.table.angle_threshold = table.at("angle_threshold").get<double>();
  const Index rank = artifact.basis.effective_rank;
  for (const auto& ref : table.at("references")) {
    tunnel::Frame frame;
    frame.t_ref = ref.at("t_ref").get<double>();
    frame.tangent = vectorFromJson(ref.at("tangent"));
    frame.normals = matrixFromJsonFlat(ref.at("normals"), rank, rank - 1);
    frame.completed = ref.value("completed", false);
    artifact.table.references.push_back(std::move(frame));
  }
  return artifact;
}

infer::Lifting liftingFromArtifact(const TunnelArtifact& artifact) {
  infer::Lifting lifting;
  lifting.control = artifact.checkpoint.control;
  lifting.basis = artifact.basis;
  lifting.table = artifact.table;
  lifting.total_arc_length = artifact.total_arc_length;
  return lifting;
}

void saveSamplesJsonl(const std::filesystem::path& path, const infer::SampleSet& samples) {
  std::string out;
  for (std::size_t chain = 0; chain < samples.coords.size(); ++chain) {
    const Matrix& draws = samples.coords[chain];
    for (Index d = 0; d < draws.rows(); ++d) {
      json line;
      line["chain"] = chain;
      line["draw"] = d;
      line["coord"] = vectorToJson(draws.row(d).transpose());
      line["log_posterior"] = samples.log_posterior(static_cast<Index>(chain), d);
      out += line.dump();
      out += '\n';
    }
  }
  atomicWriteText(path, out);
}

infer::SampleSet loadSamplesJsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open samples file: " + path.string());
  std::vector<std::vector<Vector>> per_chain;
  std::vector<std::vector<double>> per_chain_lp;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("malformed JSONL at line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto chain = j.at("chain").get<std::size_t>();
    if (chain >= per_chain.size()) {
      per_chain.resize(chain + 1);
      per_chain_lp.resize(chain + 1);
    }
    per_chain[chain].push_back(vectorFromJson(j.at("coord")));
    per_chain_lp[chain].push_back(j.at("log_posterior").get<double>());
  }
  if (per_chain.empty()) throw DataError("samples file is empty: " + path.string());

  infer::SampleSet set;
  const std::size_t draws = per_chain.front().size();
  set.log_posterior.resize(static_cast<Index>(per_chain.size()), static_cast<Index>(draws));
  for (std::size_t chain = 0; chain < per_chain.size(); ++chain) {
    if (per_chain[chain].size() != draws) {
      throw DataError("chains have unequal draw counts in " + path.string());
    }
    Matrix m(static_cast<Index>(draws), per_chain[chain].front().size());
    for (std::size_t d = 0; d < draws; ++d) {
      m.row(static_cast<Index>(d)) = per_chain[chain][d].transpose();
      set.log_posterior(static_cast<Index>(chain), static_cast<Index>(d)) = per_chain_lp[chain][d];
    }
    set.coords.push_back(std::move(m));
  }
  set.stats.resize(per_chain.size());
  return set;
}

ManifestBuilder::ManifestBuilder(std::string command, json config) {
  config_hash_ = hashString(config.dump());
  manifest_["command"] = std::move(command);
  manifest_["version"] = "0.1.0";
  manifest_["config"] = std::move(config);
  manifest_["config_hash"] = config_hash_;
  manifest_["inputs"] = json::object();
  manifest_["outputs"] = json::object();
}

void ManifestBuilder::addInput(const std::filesystem::path& path) {
  manifest_["inputs"][path.string()] = hashFile(path);
}

void ManifestBuilder::addOutput(const std::filesystem::path& path) {
  manifest_["outputs"][path.string()] = hashFile(path);
}

void ManifestBuilder::write(const std::filesystem::path& path, double wall_time_s) const {
  json full = manifest_;
  full["wall_time_s"] = wall_time_s;
  atomicWriteText(path, full.dump(2) + "\n");
}

void verifyHash(const std::filesystem::path& path, const std::string& expected) {
  const std::string actual = hashFile(path);
  if (actual != expected) {
    throw StaleArtifactError("artifact " + path.string() + " does not match its recorded hash",
                             expected, actual);
  }
}

}  // namespace losstunnel::io
