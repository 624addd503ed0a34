#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "losstunnel/artifacts.hpp"
#include "losstunnel/dataset.hpp"
#include "losstunnel/diagnostics.hpp"
#include "losstunnel/hashing.hpp"
#include "losstunnel/inference.hpp"
#include "losstunnel/metrics.hpp"
#include "losstunnel/pathopt.hpp"
#include "losstunnel/polymer.hpp"

namespace fs = std::filesystem;
using namespace losstunnel;
using io::json;

namespace {

constexpr int kSchemaVersion = 1;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

json loadConfigFile(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config JSON: " + std::string(e.what()));
  }
  if (j.contains("schema_version") && j["schema_version"].get<int>() != kSchemaVersion) {
    throw ConfigError("config schema version mismatch: binary speaks version " +
                      std::to_string(kSchemaVersion));
  }
  return j;
}

std::string formatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Skip recomputation when the previous run in `out` used the same config and
// inputs and all recorded outputs are intact.
bool upToDate(const fs::path& out_dir, const std::string& command, const std::string& config_hash) {
  const fs::path manifest_path = out_dir / "manifest.json";
  if (!fs::exists(manifest_path)) return false;
  json manifest;
  try {
    std::ifstream in(manifest_path);
    in >> manifest;
  } catch (...) {
    return false;
  }
  if (manifest.value("command", "") != command) return false;
  if (manifest.value("config_hash", "") != config_hash) return false;
  try {
    for (const auto& [path, hash] : manifest.at("inputs").items()) {
      if (hashFile(path) != hash.get<std::string>()) return false;
    }
    for (const auto& [path, hash] : manifest.at("outputs").items()) {
      if (hashFile(path) != hash.get<std::string>()) return false;
    }
  } catch (...) {
    return false;
  }
  return true;
}

mlp::MlpSpec specFromConfig(const json& model) {
  mlp::MlpSpec spec;
  spec.layer_widths = model.value("layer_widths", std::vector<int>{3, 16, 16, 16, 1});
  spec.activation = mlp::activationFromString(model.value("activation", std::string("relu")));
  spec.task = mlp::taskFromString(model.value("task", std::string("regression_homoscedastic")));
  return spec;
}

data::SyntheticConfig syntheticFromConfig(const json& j) {
  data::SyntheticConfig config;
  config.seed = j.value("seed", std::uint64_t{0});
  config.noise_sd = j.value("noise_sd", 0.05);
  config.expansion_degree = j.value("expansion_degree", 3);
  if (j.contains("counts")) {
    config.n_train = j["counts"].value("train", 70);
    config.n_val = j["counts"].value("val", 18);
    config.n_test = j["counts"].value("test", 33);
  }
  if (j.contains("gap")) {
    config.gap_low = j["gap"][0].get<double>();
    config.gap_high = j["gap"][1].get<double>();
  }
  if (j.contains("train_range")) {
    config.train_low = j["train_range"][0].get<double>();
    config.train_high = j["train_range"][1].get<double>();
  }
  if (j.contains("test_range")) {
    config.test_low = j["test_range"][0].get<double>();
    config.test_high = j["test_range"][1].get<double>();
  }
  if (j.contains("generator")) config.generator = specFromConfig(j["generator"]);
  config.generator.layer_widths.front() = config.expansion_degree;
  return config;
}

void writeCsv(const fs::path& path, const std::string& header,
              const std::vector<std::vector<double>>& rows) {
  std::string out = header + "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += formatDouble(row[i]);
    }
    out += '\n';
  }
  io::atomicWriteText(path, out);
}

void writeSplitCsv(const fs::path& path, const Matrix& X, const Vector& y) {
  std::string header;
  for (Index j = 0; j < X.cols(); ++j) header += "x" + std::to_string(j + 1) + ",";
  header += "y";
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) {
    std::vector<double> row;
    for (Index j = 0; j < X.cols(); ++j) row.push_back(X(i, j));
    row.push_back(y[i]);
    rows.push_back(std::move(row));
  }
  writeCsv(path, header, rows);
}

// --data accepts either a directory produced by gen-data (train/val/test.csv)
// or a single CSV split by the config fractions.
data::Dataset loadDataArg(const std::string& data_path, const json& data_config) {
  const bool standardize = data_config.value("standardize", false);
  data::CsvSchema schema;
  schema.target_column = data_config.value("target_column", std::string("y"));
  schema.tag_column = data_config.value("tag_column", std::string(""));

  if (fs::is_directory(data_path)) {
    Matrix X[3];
    Vector y[3];
    const char* names[3] = {"train.csv", "val.csv", "test.csv"};
    const char* tags[3] = {"train", "val", "test"};
    std::vector<std::string> all_tags;
    Index total = 0, cols = 0;
    for (int s = 0; s < 3; ++s) {
      const fs::path file = fs::path(data_path) / names[s];
      if (!fs::exists(file)) throw DataError("expected " + file.string() + " in data directory");
      data::SplitSpec take_all;
      take_all.train_fraction = 1.0;
      take_all.val_fraction = 0.0;
      data::CsvSchema split_schema = schema;
      split_schema.tag_column.clear();
      const auto part = data::loadCsv(file, split_schema, take_all, false);
      X[s] = part.X_train;
      y[s] = part.y_train;
      total += X[s].rows();
      cols = X[s].cols();
      for (Index i = 0; i < X[s].rows(); ++i) all_tags.emplace_back(tags[s]);
    }
    Matrix combined(total, cols);
    Vector targets(total);
    Index at = 0;
    for (int s = 0; s < 3; ++s) {
      combined.middleRows(at, X[s].rows()) = X[s];
      targets.segment(at, y[s].size()) = y[s];
      at += X[s].rows();
    }
    return data::splitAndStandardize(combined, targets, all_tags, {}, standardize,
                                     "dir:" + data_path);
  }

  data::SplitSpec split;
  if (data_config.contains("split")) {
    split.train_fraction = data_config["split"].value("train_fraction", 0.7);
    split.val_fraction = data_config["split"].value("val_fraction", 0.15);
    split.seed = data_config["split"].value("seed", std::uint64_t{0});
  }
  return data::loadCsv(data_path, schema, split, standardize);
}

pathopt::TrainConfig trainConfigFromJson(const json& j) {
  pathopt::TrainConfig config;
  const std::string objective = j.value("objective", std::string("uniform_t"));
  if (objective == "uniform_t") {
    config.objective = pathopt::Objective::kUniformT;
  } else if (objective == "arc_length_is") {
    config.objective = pathopt::Objective::kArcLengthIs;
  } else {
    throw ConfigError("unknown objective: " + objective);
  }
  config.samples_per_step = j.value("samples_per_step", 1);
  const std::string optimizer = j.value("optimizer", std::string("adam"));
  if (optimizer == "adam") {
    config.optimizer = pathopt::OptimizerKind::kAdam;
  } else if (optimizer == "sgd") {
    config.optimizer = pathopt::OptimizerKind::kSgd;
  } else {
    throw ConfigError("unknown optimizer: " + optimizer);
  }
  if (j.contains("adam")) {
    config.adam.beta1 = j["adam"].value("beta1", 0.9);
    config.adam.beta2 = j["adam"].value("beta2", 0.999);
    config.adam.epsilon = j["adam"].value("epsilon", 1e-8);
  }
  config.learning_rate = j.value("learning_rate", 1e-3);
  config.weight_decay = j.value("weight_decay", 0.0);
  config.epochs = j.value("epochs", 1000);
  config.batch_size = j.value("batch_size", Index{0});
  if (j.contains("early_stop")) {
    config.early_stop.grid_points = j["early_stop"].value("grid_points", 1000);
    config.early_stop.patience = j["early_stop"].value("patience", 0);
    config.early_stop.eval_every = j["early_stop"].value("eval_every", 1);
  }
  config.seed = j.value("seed", std::uint64_t{0});
  config.freeze_endpoints = j.value("freeze_endpoints", false);
  return config;
}

int cmdGenData(const std::string& config_path, const std::string& out,
               std::optional<std::uint64_t> seed, bool force) {
  Timer timer;
  json config = loadConfigFile(config_path);
  if (seed) config["seed"] = *seed;
  const data::SyntheticConfig synth = syntheticFromConfig(config);

  io::ManifestBuilder manifest("gen-data", config);
  const fs::path out_dir(out);
  if (!force && upToDate(out_dir, "gen-data", manifest.configHash())) {
    std::cout << "gen-data: outputs up to date in " << out << "\n";
    return 0;
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw DataError("cannot create output directory: " + out);

  const auto ds = data::generateSynthetic(synth);
  writeSplitCsv(out_dir / "train.csv", ds.X_train, ds.y_train);
  writeSplitCsv(out_dir / "val.csv", ds.X_val, ds.y_val);
  writeSplitCsv(out_dir / "test.csv", ds.X_test, ds.y_test);

  json ds_manifest;
  ds_manifest["provenance"] = ds.provenance;
  ds_manifest["counts"] = {{"train", ds.X_train.rows()},
                           {"val", ds.X_val.rows()},
                           {"test", ds.X_test.rows()}};
  ds_manifest["noise_sd"] = synth.noise_sd;
  ds_manifest["expansion_degree"] = synth.expansion_degree;
  io::atomicWriteText(out_dir / "dataset.json", ds_manifest.dump(2) + "\n");

  manifest.addOutput(out_dir / "train.csv");
  manifest.addOutput(out_dir / "val.csv");
  manifest.addOutput(out_dir / "test.csv");
  manifest.addOutput(out_dir / "dataset.json");
  manifest.write(out_dir / "manifest.json", timer.seconds());
  std::cout << "gen-data: wrote " << ds.X_train.rows() << "/" << ds.X_val.rows() << "/"
            << ds.X_test.rows() << " rows to " << out << "\n";
  return 0;
}

int cmdTrainPath(const std::string& config_path, const std::string& data_path,
                 const std::string& out, std::optional<std::uint64_t> seed, bool portable,
                 bool force) {
  Timer timer;
  json config = loadConfigFile(config_path);
  if (seed) config["seed"] = *seed;
  io::ManifestBuilder manifest("train-path", config);
  const fs::path out_dir(out);
  if (!force && upToDate(out_dir, "train-path", manifest.configHash())) {
    std::cout << "train-path: outputs up to date in " << out << "\n";
    return 0;
  }

  const auto dataset = loadDataArg(data_path, config.value("data", json::object()));
  const mlp::MlpSpec spec = specFromConfig(config.value("model", json::object()));
  const bool bias_sorted = config.value("model", json::object()).value("bias_sorted", false);
  const mlp::Mlp net(spec, bias_sorted);
  if (net.inputWidth() != dataset.X_train.cols()) {
    throw ConfigError("model input width does not match the data");
  }

  const int degree = config.value("degree", 10);
  if (degree < 1) throw ConfigError("degree must be >= 1");
  pathopt::TrainConfig train = trainConfigFromJson(config);
  train.seed = config.value("seed", train.seed);

  mlp::InitScheme init;
  if (config.contains("init")) {
    const std::string scheme = config["init"].value("scheme", std::string("uniform_fan_in"));
    if (scheme == "uniform_fan_in") {
      init.kind = mlp::InitScheme::Kind::kUniformFanIn;
    } else if (scheme == "normal") {
      init.kind = mlp::InitScheme::Kind::kNormal;
      init.sigma = config["init"].value("sigma", 0.1);
    } else {
      throw ConfigError("unknown init scheme: " + scheme);
    }
  }
  Matrix lambda(degree + 1, net.dim());
  for (int k = 0; k <= degree; ++k) {
    lambda.row(k) =
        mlp::init(net, train.seed * 1000003ULL + static_cast<std::uint64_t>(k), init).transpose();
  }

  const auto result = pathopt::trainPath(net, lambda, dataset, train);

  fs::create_directories(out_dir);
  io::Checkpoint ckpt;
  ckpt.control = result.control;
  ckpt.spec = spec;
  ckpt.bias_sorted = bias_sorted;
  ckpt.includes_log_sigma = net.layout().includes_log_sigma;
  ckpt.seed = train.seed;
  ckpt.metadata = {{"best_epoch", result.best_epoch},
                   {"best_val_score", result.best_val_score},
                   {"aborted_non_finite", result.aborted_non_finite},
                   {"data", dataset.provenance}};
  io::saveCheckpoint(out_dir / "ckpt.json", ckpt, portable);

  std::vector<std::vector<double>> rows;
  for (const auto& r : result.trace.rows) {
    rows.push_back({static_cast<double>(r.epoch), r.loss, r.val_score, r.arc_length, r.re, r.rg,
                    r.lambda_k, r.com, r.grad_norm});
  }
  writeCsv(out_dir / "trace.csv", "epoch,loss,val_score,S,R_e,R_g,lambda_K,com,grad_norm", rows);

  if (fs::is_directory(data_path)) {
    for (const char* name : {"train.csv", "val.csv"}) {
      manifest.addInput(fs::path(data_path) / name);
    }
  } else {
    manifest.addInput(data_path);
  }
  manifest.addOutput(out_dir / "ckpt.json");
  if (!portable) manifest.addOutput(out_dir / "ckpt.bin");
  manifest.addOutput(out_dir / "trace.csv");
  manifest.write(out_dir / "manifest.json", timer.seconds());
  std::cout << "train-path: best validation path score " << result.best_val_score << " at epoch "
            << result.best_epoch
            << (result.aborted_non_finite ? " (aborted on non-finite loss)" : "") << "\n";
  return 0;
}

std::string checkpointChainHash(const fs::path& ckpt_json) {
  std::string combined = hashFile(ckpt_json);
  fs::path bin = ckpt_json;
  bin.replace_extension(".bin");
  if (fs::exists(bin)) combined += hashFile(bin);
  return hashString(combined);
}

int cmdBuildTunnel(const std::string& ckpt_path, const std::string& out, int resolution,
                   double threshold_deg, bool force) {
  Timer timer;
  const json config{{"ckpt", ckpt_path}, {"resolution", resolution}, {"threshold_deg", threshold_deg}};
  io::ManifestBuilder manifest("build-tunnel", config);
  const fs::path out_dir(out);
  if (!force && upToDate(out_dir, "build-tunnel", manifest.configHash())) {
    std::cout << "build-tunnel: outputs up to date in " << out << "\n";
    return 0;
  }

  // the producing run recorded its output hashes; a divergence means someone
  // edited the checkpoint after training
  const fs::path producer_manifest = fs::path(ckpt_path).parent_path() / "manifest.json";
  if (fs::exists(producer_manifest)) {
    json pm;
    std::ifstream in(producer_manifest);
    in >> pm;
    if (pm.contains("outputs")) {
      for (const auto& [path, hash] : pm["outputs"].items()) {
        const std::string name = fs::path(path).filename().string();
        if (name.rfind("ckpt", 0) == 0) io::verifyHash(path, hash.get<std::string>());
      }
    }
  }

  io::TunnelArtifact artifact;
  artifact.checkpoint = io::loadCheckpoint(ckpt_path);
  artifact.basis = tunnel::buildBasis(artifact.checkpoint.control);
  artifact.table = tunnel::buildFrameTable(artifact.checkpoint.control, artifact.basis, resolution,
                                           threshold_deg);
  artifact.total_arc_length = bezier::totalArcLength(artifact.checkpoint.control);
  artifact.checkpoint_hash = checkpointChainHash(ckpt_path);

  fs::create_directories(out_dir);
  io::saveTunnelArtifact(out_dir / "tunnel.json", artifact);
  manifest.addInput(ckpt_path);
  manifest.addOutput(out_dir / "tunnel.json");
  manifest.write(out_dir / "manifest.json", timer.seconds());
  std::cout << "build-tunnel: rank " << artifact.basis.effective_rank << ", "
            << artifact.table.references.size() << " reference frame(s)"
            << (artifact.basis.rank_deficient ? " (rank-deficient basis, truncated)" : "") << "\n";
  return 0;
}

struct SampleArgs {
  std::string tunnel, data, prior = "tunnel-s", kernel = "rwmh";
  double temperature = 1.0;
  int chains = 4, warmup = 500, draws = 1000, thinning = 1;
  std::optional<std::uint64_t> seed;
};

int cmdSample(const std::string& config_path, const SampleArgs& args, const std::string& out,
              bool force) {
  Timer timer;
  json config = loadConfigFile(config_path);
  config["tunnel"] = args.tunnel;
  config["prior"] = args.prior;
  config["kernel"] = args.kernel;
  config["temperature"] = args.temperature;
  config["chains"] = args.chains;
  config["warmup"] = args.warmup;
  config["draws"] = args.draws;
  config["thinning"] = args.thinning;
  if (args.seed) config["seed"] = *args.seed;

  io::ManifestBuilder manifest("sample", config);
  const fs::path out_dir(out);
  if (!force && upToDate(out_dir, "sample", manifest.configHash())) {
    std::cout << "sample: outputs up to date in " << out << "\n";
    return 0;
  }

  const auto artifact = io::loadTunnelArtifact(args.tunnel);
  const auto lifting = io::liftingFromArtifact(artifact);
  const mlp::Mlp net = io::modelFromCheckpoint(artifact.checkpoint);
  const auto dataset = loadDataArg(args.data, config.value("data", json::object()));
  if (net.inputWidth() != dataset.X_train.cols()) {
    throw ConfigError("tunnel model input width does not match the data");
  }

  infer::PosteriorTarget target;
  target.net = &net;
  target.X = &dataset.X_train;
  target.y = &dataset.y_train;
  target.lifting = &lifting;
  target.prior.kind = infer::priorKindFromString(args.prior);
  target.prior.sigma = config.value("prior_sigma", 1.0);
  const std::string adjustment = config.value("adjustment", std::string("speed_only"));
  if (adjustment == "speed_only") {
    target.prior.adjustment = tunnel::VolumeMode::kSpeedOnly;
  } else if (adjustment == "full_jacobian") {
    target.prior.adjustment = tunnel::VolumeMode::kFullJacobian;
  } else {
    throw ConfigError("unknown adjustment mode: " + adjustment);
  }
  target.temperature = args.temperature;

  infer::SamplerConfig sampler;
  sampler.chains = args.chains;
  sampler.warmup = args.warmup;
  sampler.draws = args.draws;
  sampler.thinning = args.thinning;
  sampler.seed = config.value("seed", std::uint64_t{0});
  if (args.kernel == "rwmh") {
    sampler.kernel = infer::SamplerConfig::Kernel::kRwmh;
    if (config.contains("rwmh_scale")) {
      sampler.rwmh.scales =
          Vector::Constant(infer::coordDim(target), config["rwmh_scale"].get<double>());
    }
  } else if (args.kernel == "hmc") {
    sampler.kernel = infer::SamplerConfig::Kernel::kHmc;
    sampler.hmc.step_size = config.value("hmc_step_size", 0.02);
    sampler.hmc.leapfrog_steps = config.value("hmc_leapfrog_steps", 16);
  } else {
    throw ConfigError("unknown kernel: " + args.kernel + " (expected rwmh or hmc)");
  }

  const auto density = infer::makeTargetDensity(target);
  const auto samples =
      args.kernel == "hmc" ? infer::runHmc(density, sampler) : infer::runMh(density, sampler);

  fs::create_directories(out_dir);
  io::saveSamplesJsonl(out_dir / "samples.jsonl", samples);

  json summary;
  summary["tunnel_hash"] = hashFile(args.tunnel);
  summary["prior"] = args.prior;
  summary["prior_sigma"] = target.prior.sigma;
  summary["adjustment"] = adjustment;
  summary["temperature"] = args.temperature;
  summary["kernel"] = args.kernel;
  summary["chains"] = args.chains;
  summary["draws"] = args.draws;
  summary["provenance"] = samples.provenance;
  json acceptance = json::array();
  long divergences = 0;
  for (const auto& st : samples.stats) {
    acceptance.push_back(st.acceptance);
    divergences += st.divergences;
  }
  summary["acceptance"] = acceptance;
  summary["divergences"] = divergences;
  json ess_per_dim = json::array();
  json rhat_per_dim = json::array();
  const Index dim = samples.coords.front().cols();
  Matrix chain_matrix(static_cast<Index>(samples.coords.size()), samples.coords.front().rows());
  for (Index d = 0; d < dim; ++d) {
    ess_per_dim.push_back(diag::ess(infer::extractDimension(samples, d)));
    if (samples.coords.size() >= 2) {
      for (std::size_t c = 0; c < samples.coords.size(); ++c) {
        chain_matrix.row(static_cast<Index>(c)) = samples.coords[c].col(d).transpose();
      }
      bool defined = false;
      const double r = diag::rhat(chain_matrix, &defined);
      rhat_per_dim.push_back(defined ? json(r) : json());
    }
  }
  summary["ess_per_dim"] = ess_per_dim;
  summary["rhat_per_dim"] = rhat_per_dim;
  summary["wall_time_s"] = timer.seconds();
  io::atomicWriteText(out_dir / "sample_summary.json", summary.dump(2) + "\n");

  manifest.addInput(args.tunnel);
  manifest.addOutput(out_dir / "samples.jsonl");
  manifest.addOutput(out_dir / "sample_summary.json");
  manifest.write(out_dir / "manifest.json", timer.seconds());
  std::cout << "sample: " << args.chains << " chain(s) x " << args.draws << " draws written to "
            << out << "\n";
  return 0;
}

int cmdDiagnose(const std::string& samples_path, const std::string& out) {
  Timer timer;
  const auto samples = io::loadSamplesJsonl(samples_path);
  const Index dim = samples.coords.front().cols();

  json report;
  json ess_per_dim = json::array();
  json rhat_per_dim = json::array();
  double ess_sum = 0.0, rhat_sum = 0.0;
  int rhat_count = 0;
  Matrix chain_matrix(static_cast<Index>(samples.coords.size()), samples.coords.front().rows());
  for (Index d = 0; d < dim; ++d) {
    const double e = diag::ess(infer::extractDimension(samples, d));
    ess_per_dim.push_back(e);
    ess_sum += e;
    if (samples.coords.size() >= 2) {
      for (std::size_t c = 0; c < samples.coords.size(); ++c) {
        chain_matrix.row(static_cast<Index>(c)) = samples.coords[c].col(d).transpose();
      }
      bool defined = false;
      const double r = diag::rhat(chain_matrix, &defined);
      rhat_per_dim.push_back(defined ? json(r) : json());
      if (defined) {
        rhat_sum += r;
        ++rhat_count;
      }
    }
  }
  report["dims"] = dim;
  report["chains"] = samples.coords.size();
  report["draws_per_chain"] = samples.coords.front().rows();
  report["ess_per_dim"] = ess_per_dim;
  report["ess_mean"] = ess_sum / static_cast<double>(dim);
  report["rhat_per_dim"] = rhat_per_dim;
  if (rhat_count > 0) report["rhat_mean"] = rhat_sum / rhat_count;

  std::cout << "diagnose: " << samples.coords.size() << " chain(s), "
            << samples.coords.front().rows() << " draws/chain\n";
  for (Index d = 0; d < dim; ++d) {
    std::cout << "  dim " << d
              << ": ESS = " << ess_per_dim[static_cast<std::size_t>(d)].get<double>();
    if (samples.coords.size() >= 2 && !rhat_per_dim[static_cast<std::size_t>(d)].is_null()) {
      std::cout << "  Rhat = " << rhat_per_dim[static_cast<std::size_t>(d)].get<double>();
    }
    std::cout << "\n";
  }

  if (!out.empty()) {
    fs::create_directories(out);
    io::atomicWriteText(fs::path(out) / "diagnostics.json", report.dump(2) + "\n");
    io::ManifestBuilder manifest("diagnose", json{{"samples", samples_path}});
    manifest.addInput(samples_path);
    manifest.addOutput(fs::path(out) / "diagnostics.json");
    manifest.write(fs::path(out) / "manifest.json", timer.seconds());
  }
  return 0;
}

int cmdEvaluate(const std::string& samples_dir, const std::string& tunnel_path,
                const std::string& data_path, const std::string& out, const json& data_config) {
  Timer timer;
  const fs::path samples_path = fs::is_directory(samples_dir)
                                    ? fs::path(samples_dir) / "samples.jsonl"
                                    : fs::path(samples_dir);
  const fs::path summary_path = samples_path.parent_path() / "sample_summary.json";
  if (!fs::exists(summary_path)) {
    throw DataError("missing sample summary next to samples: " + summary_path.string());
  }
  json summary;
  {
    std::ifstream in(summary_path);
    in >> summary;
  }
  // the sampling run pinned the tunnel it used; a mismatch is a stale chain
  io::verifyHash(tunnel_path, summary.at("tunnel_hash").get<std::string>());

  const auto artifact = io::loadTunnelArtifact(tunnel_path);
  const auto lifting = io::liftingFromArtifact(artifact);
  const mlp::Mlp net = io::modelFromCheckpoint(artifact.checkpoint);
  const auto dataset = loadDataArg(data_path, data_config);
  const auto samples = io::loadSamplesJsonl(samples_path);

  infer::PosteriorTarget target;
  target.net = &net;
  target.X = &dataset.X_train;
  target.y = &dataset.y_train;
  target.lifting = &lifting;
  target.prior.kind = infer::priorKindFromString(summary.at("prior").get<std::string>());
  target.prior.sigma = summary.value("prior_sigma", 1.0);
  target.temperature = summary.value("temperature", 1.0);

  const auto pred = infer::posteriorPredict(target, samples, dataset.X_test, dataset.y_test);
  const double lppd = metrics::lppd(pred.log_density);
  const Vector mean_pred = pred.mean.rowwise().mean();
  const double rmse = metrics::rmse(mean_pred, dataset.y_test);

  const Index dim = samples.coords.front().cols();
  double ess_sum = 0.0, rhat_sum = 0.0;
  int rhat_count = 0;
  Matrix chain_matrix(static_cast<Index>(samples.coords.size()), samples.coords.front().rows());
  for (Index d = 0; d < dim; ++d) {
    ess_sum += diag::ess(infer::extractDimension(samples, d));
    if (samples.coords.size() >= 2) {
      for (std::size_t c = 0; c < samples.coords.size(); ++c) {
        chain_matrix.row(static_cast<Index>(c)) = samples.coords[c].col(d).transpose();
      }
      bool defined = false;
      const double r = diag::rhat(chain_matrix, &defined);
      if (defined) {
        rhat_sum += r;
        ++rhat_count;
      }
    }
  }

  json metrics_json;
  metrics_json["lppd"] = lppd;
  metrics_json["rmse"] = rmse;
  metrics_json["rmse_scale"] = dataset.stats.active ? "standardized" : "raw";
  metrics_json["ess_mean"] = ess_sum / static_cast<double>(dim);
  if (rhat_count > 0) metrics_json["rhat_mean"] = rhat_sum / rhat_count;
  metrics_json["draws"] = pred.log_density.cols();
  metrics_json["prior"] = summary.at("prior");
  metrics_json["temperature"] = summary.value("temperature", 1.0);

  std::cout << "evaluate (" << summary.at("prior").get<std::string>()
            << ", T = " << summary.value("temperature", 1.0) << ")\n";
  std::cout << "  LPPD      " << lppd << "\n";
  std::cout << "  RMSE      " << rmse << (dataset.stats.active ? " (standardized)" : "") << "\n";
  std::cout << "  ESS mean  " << metrics_json["ess_mean"].get<double>() << "\n";
  if (rhat_count > 0) std::cout << "  Rhat mean " << metrics_json["rhat_mean"].get<double>() << "\n";

  if (!out.empty()) {
    fs::create_directories(out);
    io::atomicWriteText(fs::path(out) / "metrics.json", metrics_json.dump(2) + "\n");
    io::ManifestBuilder manifest("evaluate", json{{"samples", samples_path.string()},
                                                  {"tunnel", tunnel_path},
                                                  {"data", data_path}});
    manifest.addInput(samples_path);
    manifest.addInput(tunnel_path);
    manifest.addOutput(fs::path(out) / "metrics.json");
    manifest.write(fs::path(out) / "manifest.json", timer.seconds());
  }
  return 0;
}

int cmdSimulatePolymer(const std::string& config_path, const std::string& out,
                       std::optional<std::uint64_t> seed, bool force) {
  Timer timer;
  json config = loadConfigFile(config_path);
  if (seed) config["seed"] = *seed;

  polymer::PolymerConfig sim;
  sim.degree = config.value("degree", 10);
  sim.dim = config.value("dim", Index{55});
  sim.noise_sigma = config.value("noise_sigma", 1.0);
  sim.learning_rate = config.value("learning_rate", 1.0);
  sim.steps = config.value("steps", 10000L);
  sim.repetitions = config.value("repetitions", 100);
  sim.record_stride = config.value("record_stride", 100L);
  if (config.contains("record_steps")) {
    sim.record_steps = config["record_steps"].get<std::vector<long>>();
  }
  sim.weight_decay = config.value("weight_decay", 0.0);
  sim.seed = config.value("seed", std::uint64_t{0});

  io::ManifestBuilder manifest("simulate-polymer", config);
  const fs::path out_dir(out);
  if (!force && upToDate(out_dir, "simulate-polymer", manifest.configHash())) {
    std::cout << "simulate-polymer: outputs up to date in " << out << "\n";
    return 0;
  }

  const auto trace = polymer::simulate(sim);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto r = static_cast<Index>(i);
    rows.push_back({static_cast<double>(trace.steps[i]), trace.eff_time[i], trace.mean(r, 0),
                    trace.mean(r, 1), trace.mean(r, 2), trace.mean(r, 3), trace.mean(r, 4),
                    trace.se(r, 0), trace.se(r, 1), trace.se(r, 2), trace.se(r, 3),
                    trace.se(r, 4)});
  }
  fs::create_directories(out_dir);
  writeCsv(out_dir / "trace.csv",
           "step,eff_time,com,re,rg,lambda_k,s,com_se,re_se,rg_se,lambda_k_se,s_se", rows);
  manifest.addOutput(out_dir / "trace.csv");
  manifest.write(out_dir / "manifest.json", timer.seconds());
  std::cout << "simulate-polymer: " << trace.steps.size() << " records over " << sim.repetitions
            << " repetition(s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loss-path and tunnel experiments"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir = ".", ckpt_path, tunnel_path, samples_path;
  std::optional<std::uint64_t> seed;
  bool force = false, portable = false;
  int resolution = 1000;
  double threshold = 45.0;
  SampleArgs sample_args;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic regression dataset");
  gen->add_option("--config", config_path, "config JSON");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", seed, "seed override");
  gen->add_flag("--force", force, "recompute even if outputs are up to date");

  auto* train = app.add_subcommand("train-path", "optimize a curve of network parameters");
  train->add_option("--config", config_path, "config JSON");
  train->add_option("--data", data_path, "dataset directory or CSV file")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed, "seed override");
  train->add_flag("--portable", portable, "embed control points in the checkpoint JSON");
  train->add_flag("--force", force, "recompute even if outputs are up to date");

  auto* build = app.add_subcommand("build-tunnel", "lift a checkpoint into a tunnel artifact");
  build->add_option("--ckpt", ckpt_path, "checkpoint JSON")->required();
  build->add_option("--out", out_dir, "output directory")->required();
  build->add_option("--resolution", resolution, "frame table grid resolution");
  build->add_option("--threshold", threshold, "reference-frame angle threshold (degrees)");
  build->add_flag("--force", force, "recompute even if outputs are up to date");

  auto* sample = app.add_subcommand("sample", "draw posterior samples in tunnel coordinates");
  sample->add_option("--config", config_path, "config JSON");
  sample->add_option("--tunnel", sample_args.tunnel, "tunnel artifact")->required();
  sample->add_option("--data", sample_args.data, "dataset directory or CSV file")->required();
  sample->add_option("--prior", sample_args.prior, "volume | tunnel-t | tunnel-s");
  sample->add_option("--temp", sample_args.temperature, "likelihood temperature");
  sample->add_option("--kernel", sample_args.kernel, "rwmh | hmc");
  sample->add_option("--chains", sample_args.chains, "number of chains");
  sample->add_option("--warmup", sample_args.warmup, "warmup iterations per chain");
  sample->add_option("--draws", sample_args.draws, "retained draws per chain");
  sample->add_option("--thin", sample_args.thinning, "thinning factor");
  sample->add_option("--seed", sample_args.seed, "seed override");
  sample->add_option("--out", out_dir, "output directory")->required();
  sample->add_flag("--force", force, "recompute even if outputs are up to date");

  auto* diagnose = app.add_subcommand("diagnose", "ESS and Rhat for a samples file");
  diagnose->add_option("--samples", samples_path, "samples.jsonl")->required();
  diagnose->add_option("--out", out_dir, "output directory (optional report)");

  auto* evaluate = app.add_subcommand("evaluate", "predictive metrics for a sampling run");
  evaluate->add_option("--samples", samples_path, "sample output directory or samples.jsonl")
      ->required();
  evaluate->add_option("--tunnel", tunnel_path, "tunnel artifact")->required();
  evaluate->add_option("--data", data_path, "dataset directory or CSV file")->required();
  evaluate->add_option("--out", out_dir, "output directory");

  auto* simulate = app.add_subcommand("simulate-polymer", "noise-driven control-point chain");
  simulate->add_option("--config", config_path, "config JSON");
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--seed", seed, "seed override");
  simulate->add_flag("--force", force, "recompute even if outputs are up to date");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmdGenData(config_path, out_dir, seed, force);
    if (train->parsed()) return cmdTrainPath(config_path, data_path, out_dir, seed, portable, force);
    if (build->parsed()) return cmdBuildTunnel(ckpt_path, out_dir, resolution, threshold, force);
    if (sample->parsed()) return cmdSample(config_path, sample_args, out_dir, force);
    if (diagnose->parsed()) {
      return cmdDiagnose(samples_path, out_dir == "." ? std::string() : out_dir);
    }
    if (evaluate->parsed()) {
      return cmdEvaluate(samples_path, tunnel_path, data_path,
                         out_dir == "." ? std::string() : out_dir, json::object());
    }
    if (simulate->parsed()) return cmdSimulatePolymer(config_path, out_dir, seed, force);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const StaleArtifactError& e) {
    std::cerr << "stale artifact: " << e.what() << "\n  expected " << e.expected_hash
              << "\n  actual   " << e.actual_hash << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
