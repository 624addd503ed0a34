#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "losstunnel/dataset.hpp"
#include "losstunnel/metrics.hpp"
#include "losstunnel/rng.hpp"

using namespace losstunnel;
namespace fs = std::filesystem;

namespace {

fs::path tempCsv(const std::string& name, const std::string& content) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("synthetic: default counts and the feature gap") {
  data::SyntheticConfig config;
  config.seed = 3;
  const auto ds = data::generateSynthetic(config);
  CHECK(ds.X_train.rows() == 70);
  CHECK(ds.X_val.rows() == 18);
  CHECK(ds.X_test.rows() == 33);
  CHECK(ds.X_train.cols() == 3);

  // no train/val raw feature inside the gap; expanded column 0 is raw x
  for (Index i = 0; i < ds.X_train.rows(); ++i) {
    const double x = ds.X_train(i, 0);
    CHECK((x <= -0.6 || x >= 0.6));
    CHECK(x >= -2.0);
    CHECK(x <= 2.0);
    CHECK(ds.X_train(i, 1) == doctest::Approx(x * x).epsilon(1e-14));
    CHECK(ds.X_train(i, 2) == doctest::Approx(x * x * x).epsilon(1e-14));
  }
  for (Index i = 0; i < ds.X_val.rows(); ++i) {
    const double x = ds.X_val(i, 0);
    CHECK((x <= -0.6 || x >= 0.6));
  }
  // test split spans the extended range including the gap
  CHECK(ds.X_test.col(0).minCoeff() < -2.0);
  CHECK(ds.X_test.col(0).maxCoeff() > 2.0);
  bool in_gap = false;
  for (Index i = 0; i < ds.X_test.rows(); ++i) {
    in_gap = in_gap || std::abs(ds.X_test(i, 0)) < 0.6;
  }
  CHECK(in_gap);
}

TEST_CASE("synthetic: deterministic per seed, zero noise reproduces the generator") {
  data::SyntheticConfig config;
  config.seed = 11;
  const auto a = data::generateSynthetic(config);
  const auto b = data::generateSynthetic(config);
  CHECK((a.X_train - b.X_train).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.y_train - b.y_train).cwiseAbs().maxCoeff() == 0.0);

  config.noise_sd = 0.0;
  const auto clean = data::generateSynthetic(config);
  const mlp::Mlp generator(config.generator, false, false);
  const Vector theta = mlp::init(generator, config.seed, config.generator_init);
  const Vector expected = mlp::forward(generator, theta, clean.X_train).col(0);
  CHECK((clean.y_train - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csv: split fractions, standardization round trip, determinism") {
  std::string content = "a,b,y\n";
  RngEngine rng = makeStream(5, 0);
  for (int i = 0; i < 100; ++i) {
    content += std::to_string(uniform01(rng)) + "," + std::to_string(2.0 * uniform01(rng)) + "," +
               std::to_string(standardNormal(rng)) + "\n";
  }
  const auto path = tempCsv("losstunnel_split.csv", content);

  data::CsvSchema schema;
  schema.target_column = "y";
  data::SplitSpec split;
  split.train_fraction = 0.7;
  split.val_fraction = 0.15;
  split.seed = 9;
  const auto ds = data::loadCsv(path, schema, split, true);
  CHECK(ds.X_train.rows() == 70);
  CHECK(ds.X_val.rows() == 15);
  CHECK(ds.X_test.rows() == 15);

  // standardized train columns: zero mean, unit standard deviation
  for (Index j = 0; j < ds.X_train.cols(); ++j) {
    CHECK(std::abs(ds.X_train.col(j).mean()) < 1e-10);
    const double sd = std::sqrt((ds.X_train.col(j).array() - ds.X_train.col(j).mean()).square().sum() /
                                (ds.X_train.rows() - 1));
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-10));
  }

  // destandardize(standardize(y)) = y
  const Vector back = data::destandardizeTargets(ds.y_train, ds.stats);
  CHECK(back.size() == 70);
  // the raw target values are recoverable within rounding
  const auto ds_raw = data::loadCsv(path, schema, split, false);
  CHECK((back - ds_raw.y_train).cwiseAbs().maxCoeff() < 1e-12);

  const auto ds2 = data::loadCsv(path, schema, split, true);
  CHECK((ds.X_train - ds2.X_train).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csv: explicit split tags and quoted fields") {
  const auto path = tempCsv("losstunnel_tags.csv",
                            "x,\"y\",split\n1.0,2.0,train\n2.0,3.0,train\n3.0,4.0,val\n4.0,5.0,test\n");
  data::CsvSchema schema;
  schema.target_column = "y";
  schema.tag_column = "split";
  const auto ds = data::loadCsv(path, schema, {}, false);
  CHECK(ds.X_train.rows() == 2);
  CHECK(ds.X_val.rows() == 1);
  CHECK(ds.X_test.rows() == 1);
  CHECK(ds.y_test[0] == 5.0);
}

TEST_CASE("csv: error contracts name the problem") {
  const auto path = tempCsv("losstunnel_bad.csv", "a,b\n1.0,2.0\n");
  data::CsvSchema schema;
  schema.target_column = "y";
  try {
    data::loadCsv(path, schema, {}, false);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("'y'") != std::string::npos);
  }

  const auto short_row = tempCsv("losstunnel_short.csv", "a,y\n1.0,2.0\n3.0\n");
  schema.target_column = "y";
  try {
    data::loadCsv(short_row, schema, {}, false);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("csv: constant feature gets a floored deviation and a warning") {
  std::string content = "a,b,y\n";
  for (int i = 0; i < 20; ++i) {
    content += "5.0," + std::to_string(i * 0.1) + "," + std::to_string(i * 1.0) + "\n";
  }
  const auto path = tempCsv("losstunnel_const.csv", content);
  data::CsvSchema schema;
  schema.target_column = "y";
  data::SplitSpec split;
  split.train_fraction = 0.5;
  split.val_fraction = 0.25;
  const auto ds = data::loadCsv(path, schema, split, true);
  CHECK_FALSE(ds.warnings.empty());
  CHECK(ds.stats.feature_std[0] == 1e-12);
}

TEST_CASE("lppd: closed form, duplication invariance, hand-computed mixture") {
  // one draw, exact Gaussian density at the mean
  Matrix one(4, 1);
  one.setConstant(-0.5 * std::log(2.0 * std::numbers::pi));
  CHECK(metrics::lppd(one) == doctest::Approx(-0.9189385332).epsilon(1e-9));

  // duplicated draws leave the value unchanged
  Matrix two(4, 2);
  two << one, one;
  CHECK(metrics::lppd(two) == doctest::Approx(metrics::lppd(one)).epsilon(1e-12));

  // densities e^-1 and e^-3: log((e^-1 + e^-3)/2)
  Matrix pair(1, 2);
  pair << -1.0, -3.0;
  const double expected = std::log((std::exp(-1.0) + std::exp(-3.0)) / 2.0);
  CHECK(metrics::lppd(pair) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(metrics::lppd(pair) == doctest::Approx(-1.5662).epsilon(1e-4));

  // extreme underflow region stays finite through log-sum-exp
  Matrix tiny(1, 2);
  tiny << -700.0, -700.0;
  CHECK(metrics::lppd(tiny) == doctest::Approx(-700.0).epsilon(1e-12));

  // a singleton of the better draw beats a singleton of the worse draw
  Matrix best(1, 1), worse(1, 1);
  best << -1.0;
  worse << -3.0;
  CHECK(metrics::lppd(best) >= metrics::lppd(worse));

  CHECK_THROWS_AS(metrics::lppd(Matrix(3, 0)), InputError);
}

TEST_CASE("rmse and accuracy") {
  Vector pred(4), target(4);
  pred << 1.0, 2.0, 3.0, 4.0;
  target = pred;
  CHECK(metrics::rmse(pred, target) == 0.0);
  CHECK(metrics::rmse(pred.array() + 0.5, target) == doctest::Approx(0.5).epsilon(1e-12));

  data::Standardization stats;
  stats.active = true;
  stats.target_std = 2.0;
  CHECK(metrics::rmseDestandardized(pred.array() + 0.5, target, stats) ==
        doctest::Approx(1.0).epsilon(1e-12));

  Matrix logits(10, 3);
  logits.setZero();
  Vector labels(10);
  for (Index i = 0; i < 10; ++i) {
    const Index cls = i % 3;
    logits(i, cls) = 1.0;
    labels[i] = static_cast<double>(cls);
  }
  logits(9, static_cast<Index>(labels[9])) = 0.0;
  logits(9, (static_cast<Index>(labels[9]) + 1) % 3) = 1.0;  // one wrong row
  CHECK(metrics::accuracy(logits, labels) == doctest::Approx(0.9).epsilon(1e-12));

  CHECK_THROWS_AS(metrics::rmse(pred, Vector::Zero(3)), InputError);
}
