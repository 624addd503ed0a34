#ifndef LOSSTUNNEL_MLP_HPP
#define LOSSTUNNEL_MLP_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "losstunnel/rng.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::mlp {

enum class Activation { kRelu, kElu };
enum class Task { kRegressionHomoscedastic, kClassification };

std::string toString(Activation a);
std::string toString(Task t);
Activation activationFromString(const std::string& s);
Task taskFromString(const std::string& s);

/// Fully connected architecture: input width, hidden widths, output width.
/// The activation applies to hidden layers only; the output layer is linear
/// (regression means / classification logits).
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::kRelu;
  Task task = Task::kRegressionHomoscedastic;
};

struct LayerBlock {
  Index in = 0;
  Index out = 0;
  Index weight_offset = 0;  // row-major (out x in) block
  Index bias_offset = 0;
};

/// Flat offsets of every trainable block inside a parameter vector.
struct ParamLayout {
  std::vector<LayerBlock> layers;
  Index dim = 0;
  bool includes_log_sigma = false;
  Index log_sigma_offset = -1;
  bool bias_sorted = false;
};

/// Architecture plus derived layout. For homoscedastic regression a single
/// trainable log-sigma is appended to the parameter vector by default, so the
/// whole model lives in one flat vector.
class Mlp {
 public:
  explicit Mlp(MlpSpec spec, bool bias_sorted = false,
               std::optional<bool> include_log_sigma = std::nullopt);

  const MlpSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  Index dim() const { return layout_.dim; }
  Index inputWidth() const { return spec_.layer_widths.front(); }
  Index outputWidth() const { return spec_.layer_widths.back(); }

 private:
  MlpSpec spec_;
  ParamLayout layout_;
};

/// Network outputs for a batch. X is (n x input_width), one observation per
/// row; returns (n x output_width) means (regression) or logits
/// (classification). Bias-sorted layouts are evaluated on the transformed
/// parameters.
Matrix forward(const Mlp& net, const Vector& theta, const Matrix& X);

struct LossGrad {
  double loss = 0.0;  // mean negative log-likelihood over the batch
  Vector grad;        // d loss / d theta, length D
};

/// Mean NLL and its exact reverse-mode gradient. For regression the per-point
/// NLL is 0.5*log(2*pi*sigma^2) + (y-f)^2/(2*sigma^2) with sigma =
/// exp(log_sigma) (or 1 when the layout carries no log-sigma). Classification
/// uses softmax cross-entropy on integer labels.
LossGrad lossAndGrad(const Mlp& net, const Vector& theta, const Matrix& X, const Vector& y);

/// Mean NLL only. Never throws on overflow: non-finite values propagate to the
/// returned value so samplers can map them to zero density.
double meanNll(const Mlp& net, const Vector& theta, const Matrix& X, const Vector& y);

/// Per-point log-densities log p(y_i | theta), length n. Same no-throw policy
/// as meanNll.
Vector pointLogDensities(const Mlp& net, const Vector& theta, const Matrix& X, const Vector& y);

/// Maps unrestricted parameters to the effective ones: per layer the biases
/// become a cumulative sum whose increments pass through softplus, which makes
/// them strictly increasing. Weights and log-sigma are unchanged.
Vector biasSortTransform(const Mlp& net, const Vector& raw);

struct InitScheme {
  enum class Kind { kUniformFanIn, kNormal, kNormalFanIn };
  Kind kind = Kind::kUniformFanIn;
  double sigma = 0.1;  // stddev for kNormal; gain over 1/sqrt(fan_in) for kNormalFanIn
};

/// Seeded random parameter vector; log-sigma starts at 0 when present.
Vector init(const Mlp& net, std::uint64_t seed, const InitScheme& scheme = InitScheme{});

}  // namespace losstunnel::mlp

#endif
