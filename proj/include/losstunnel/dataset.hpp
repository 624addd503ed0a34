#ifndef LOSSTUNNEL_DATASET_HPP
#define LOSSTUNNEL_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "losstunnel/mlp.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::data {

/// Affine feature/target transform fitted on the training split only.
struct Standardization {
  Vector feature_mean;
  Vector feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;
  bool active = false;
};

struct Dataset {
  Matrix X_train, X_val, X_test;
  Vector y_train, y_val, y_test;
  Standardization stats;
  std::string provenance;
  std::vector<std::string> warnings;
};

/// Synthetic 1-D regression set drawn from a randomly initialized generator
/// network: train/val features are uniform on [train_low, train_high] with the
/// gap interval rejected, test features span the extended range including the
/// gap. Features are expanded to [x, x^2, ..., x^degree].
struct SyntheticConfig {
  mlp::MlpSpec generator{{3, 16, 16, 16, 1}, mlp::Activation::kRelu,
                         mlp::Task::kRegressionHomoscedastic};
  int expansion_degree = 3;
  double noise_sd = 0.05;
  int n_train = 70;
  int n_val = 18;
  int n_test = 33;
  double gap_low = -0.6, gap_high = 0.6;
  double train_low = -2.0, train_high = 2.0;
  double test_low = -2.4, test_high = 2.4;
  std::uint64_t seed = 0;
  // fan-in-scaled weights keep the generator output near unit scale while
  // still giving the function visible structure over the feature range
  mlp::InitScheme generator_init{mlp::InitScheme::Kind::kNormalFanIn, 1.5};
};

Dataset generateSynthetic(const SyntheticConfig& config);

/// Polynomial feature expansion used by the synthetic generator.
Matrix expandFeatures(const Vector& x, int degree);

struct CsvSchema {
  std::string target_column;
  std::vector<std::string> feature_columns;  // empty: every other column
  std::string tag_column;                    // optional split tag column
};

struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;
};

/// RFC-4180-style CSV ingestion (header row required). Rows are split either
/// by the schema's tag column (values train/val/test) or by shuffled
/// fractions. Standardization, when requested, is fitted on the train split
/// and applied everywhere; constant features get a std floor of 1e-12 with a
/// warning.
Dataset loadCsv(const std::filesystem::path& path, const CsvSchema& schema,
                const SplitSpec& split, bool standardize);

/// In-memory variant of the split+standardize pipeline (used by loadCsv).
Dataset splitAndStandardize(const Matrix& X, const Vector& y,
                            const std::vector<std::string>& tags, const SplitSpec& split,
                            bool standardize, std::string provenance);

Vector destandardizeTargets(const Vector& y, const Standardization& stats);

}  // namespace losstunnel::data

#endif
