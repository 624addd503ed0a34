#include "losstunnel/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "losstunnel/rng.hpp"

namespace losstunnel::data {

namespace {

Matrix takeRows(const Matrix& X, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(rows[i]);
  return out;
}

Vector takeEntries(const Vector& y, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = y[rows[i]];
  return out;
}

void applyStandardization(Matrix& X, Vector& y, const Standardization& s) {
  if (X.rows() == 0) return;
  X = (X.rowwise() - s.feature_mean.transpose()).array().rowwise() /
      s.feature_std.transpose().array();
  y = (y.array() - s.target_mean) / s.target_std;
}

// One RFC-4180 record; handles quoted fields, escaped quotes and CRLF.
std::vector<std::string> parseCsvRecord(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      // swallow CR of CRLF
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

Matrix expandFeatures(const Vector& x, int degree) {
  if (degree < 1) throw InputError("feature expansion degree must be >= 1");
  Matrix X(x.size(), degree);
  for (Index i = 0; i < x.size(); ++i) {
    double p = 1.0;
    for (int d = 0; d < degree; ++d) {
      p *= x[i];
      X(i, d) = p;
    }
  }
  return X;
}

Dataset generateSynthetic(const SyntheticConfig& config) {
  if (config.n_train < 1 || config.n_val < 1 || config.n_test < 1) {
    throw ConfigError("synthetic counts must be positive");
  }
  if (!(config.gap_low >= config.train_low && config.gap_high <= config.train_high)) {
    throw ConfigError("gap interval must lie inside the training range");
  }
  if (config.generator.layer_widths.front() != config.expansion_degree) {
    throw ConfigError("generator input width must equal the feature expansion degree");
  }

  const mlp::Mlp generator(config.generator, false, false);
  RngEngine rng = makeStream(config.seed, 17);
  const Vector theta_gen = mlp::init(generator, config.seed, config.generator_init);

  auto draw_gapped = [&](int n) {
    Vector x(n);
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      do {
        v = uniformRange(rng, config.train_low, config.train_high);
      } while (v > config.gap_low && v < config.gap_high);
      x[i] = v;
    }
    return x;
  };

  const Vector x_train = draw_gapped(config.n_train);
  const Vector x_val = draw_gapped(config.n_val);
  Vector x_test(config.n_test);
  for (int i = 0; i < config.n_test; ++i) {
    x_test[i] = uniformRange(rng, config.test_low, config.test_high);
  }

  Dataset ds;
  ds.X_train = expandFeatures(x_train, config.expansion_degree);
  ds.X_val = expandFeatures(x_val, config.expansion_degree);
  ds.X_test = expandFeatures(x_test, config.expansion_degree);

  auto label = [&](const Matrix& X) {
    Vector y = mlp::forward(generator, theta_gen, X).col(0);
    for (Index i = 0; i < y.size(); ++i) y[i] += config.noise_sd * standardNormal(rng);
    return y;
  };
  ds.y_train = label(ds.X_train);
  ds.y_val = label(ds.X_val);
  ds.y_test = label(ds.X_test);

  ds.stats.feature_mean = Vector::Zero(config.expansion_degree);
  ds.stats.feature_std = Vector::Ones(config.expansion_degree);
  ds.provenance = "synthetic:seed=" + std::to_string(config.seed);
  return ds;
}

Dataset splitAndStandardize(const Matrix& X, const Vector& y, const std::vector<std::string>& tags,
                            const SplitSpec& split, bool standardize, std::string provenance) {
  const Index n = X.rows();
  if (y.size() != n) throw DataError("feature/target row counts differ");
  std::vector<Index> train_rows, val_rows, test_rows;

  if (!tags.empty()) {
    if (static_cast<Index>(tags.size()) != n) throw DataError("tag column length mismatch");
    for (Index i = 0; i < n; ++i) {
      const std::string& tag = tags[static_cast<std::size_t>(i)];
      if (tag == "train") {
        train_rows.push_back(i);
      } else if (tag == "val" || tag == "validation") {
        val_rows.push_back(i);
      } else if (tag == "test") {
        test_rows.push_back(i);
      } else {
        throw DataError("unknown split tag '" + tag + "'");
      }
    }
  } else {
    if (!(split.train_fraction > 0.0 && split.val_fraction >= 0.0 &&
          split.train_fraction + split.val_fraction <= 1.0)) {
      throw ConfigError("split fractions must be positive and sum to at most 1");
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    RngEngine rng = makeStream(split.seed, 23);
    for (Index i = n - 1; i > 0; --i) {
      const Index j = static_cast<Index>(uniform01(rng) * static_cast<double>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    const auto n_train = static_cast<Index>(std::floor(split.train_fraction * static_cast<double>(n)));
    const auto n_val = static_cast<Index>(std::floor(split.val_fraction * static_cast<double>(n)));
    train_rows.assign(perm.begin(), perm.begin() + n_train);
    val_rows.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    test_rows.assign(perm.begin() + n_train + n_val, perm.end());
  }

  Dataset ds;
  ds.provenance = std::move(provenance);
  ds.X_train = takeRows(X, train_rows);
  ds.y_train = takeEntries(y, train_rows);
  ds.X_val = takeRows(X, val_rows);
  ds.y_val = takeEntries(y, val_rows);
  ds.X_test = takeRows(X, test_rows);
  ds.y_test = takeEntries(y, test_rows);

  ds.stats.feature_mean = Vector::Zero(X.cols());
  ds.stats.feature_std = Vector::Ones(X.cols());
  if (standardize) {
    if (ds.X_train.rows() < 2) throw DataError("standardization needs at least two training rows");
    ds.stats.active = true;
    ds.stats.feature_mean = ds.X_train.colwise().mean();
    for (Index j = 0; j < X.cols(); ++j) {
      const double var =
          (ds.X_train.col(j).array() - ds.stats.feature_mean[j]).square().sum() /
          static_cast<double>(ds.X_train.rows() - 1);
      double sd = std::sqrt(var);
      if (sd < 1e-12) {
        sd = 1e-12;
        ds.warnings.push_back("feature column " + std::to_string(j) + " is constant on the train split");
      }
      ds.stats.feature_std[j] = sd;
    }
    ds.stats.target_mean = ds.y_train.mean();
    const double tvar = (ds.y_train.array() - ds.stats.target_mean).square().sum() /
                        static_cast<double>(ds.y_train.size() - 1);
    ds.stats.target_std = std::max(std::sqrt(tvar), 1e-12);
    applyStandardization(ds.X_train, ds.y_train, ds.stats);
    applyStandardization(ds.X_val, ds.y_val, ds.stats);
    applyStandardization(ds.X_test, ds.y_test, ds.stats);
  }
  return ds;
}

Dataset loadCsv(const std::filesystem::path& path, const CsvSchema& schema, const SplitSpec& split,
                bool standardize) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV file is empty: " + path.string());
  const std::vector<std::string> header = parseCsvRecord(line);

  auto column_of = [&](const std::string& name) -> Index {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<Index>(i);
    }
    return -1;
  };

  const Index target_col = column_of(schema.target_column);
  if (target_col < 0) {
    throw DataError("CSV is missing target column '" + schema.target_column + "'");
  }
  Index tag_col = -1;
  if (!schema.tag_column.empty()) {
    tag_col = column_of(schema.tag_column);
    if (tag_col < 0) throw DataError("CSV is missing tag column '" + schema.tag_column + "'");
  }

  std::vector<Index> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto idx = static_cast<Index>(i);
      if (idx != target_col && idx != tag_col) feature_cols.push_back(idx);
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      const Index idx = column_of(name);
      if (idx < 0) throw DataError("CSV is missing feature column '" + name + "'");
      feature_cols.push_back(idx);
    }
  }
  if (feature_cols.empty()) throw DataError("CSV has no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  std::vector<std::string> tags;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = parseCsvRecord(line);
    if (fields.size() != header.size()) {
      throw DataError("malformed CSV row at line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(feature_cols.size());
    auto parse_number = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw DataError("non-numeric value '" + s + "' at line " + std::to_string(line_no));
      }
    };
    for (Index c : feature_cols) row.push_back(parse_number(fields[static_cast<std::size_t>(c)]));
    targets.push_back(parse_number(fields[static_cast<std::size_t>(target_col)]));
    if (tag_col >= 0) tags.push_back(fields[static_cast<std::size_t>(tag_col)]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("CSV has no data rows: " + path.string());

  Matrix X(static_cast<Index>(rows.size()), static_cast<Index>(feature_cols.size()));
  Vector y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      X(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    y[static_cast<Index>(i)] = targets[i];
  }
  if (!X.allFinite() || !y.allFinite()) throw DataError("CSV contains non-finite values");
  return splitAndStandardize(X, y, tags, split, standardize, "csv:" + path.string());
}

Vector destandardizeTargets(const Vector& y, const Standardization& stats) {
  if (!stats.active) return y;
  return (y.array() * stats.target_std + stats.target_mean).matrix();
}

}  // namespace losstunnel::data
