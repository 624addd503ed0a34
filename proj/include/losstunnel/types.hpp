#ifndef LOSSTUNNEL_TYPES_HPP
#define LOSSTUNNEL_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace losstunnel {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Malformed argument (bad domain value, shape mismatch, out-of-range parameter).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent run configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Broken input data (unreadable file, malformed row, missing column).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value encountered during evaluation. `parameter_index` points at
// the first offending entry of the parameter vector, or -1 if the overflow
// happened downstream of finite parameters.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what, Index index = -1)
      : std::runtime_error(what), parameter_index(index) {}
  Index parameter_index;
};

// A consumed artifact no longer matches the hash recorded by its producer.
struct StaleArtifactError : std::runtime_error {
  StaleArtifactError(const std::string& what, std::string expected, std::string actual)
      : std::runtime_error(what), expected_hash(std::move(expected)), actual_hash(std::move(actual)) {}
  std::string expected_hash;
  std::string actual_hash;
};

}  // namespace losstunnel

#endif
