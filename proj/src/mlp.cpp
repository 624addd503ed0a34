#include "losstunnel/mlp.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace losstunnel::mlp {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double softplus(double x) {
  // overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void applyActivation(Activation act, Matrix& z) {
  if (act == Activation::kRelu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  }
}

Matrix activationDerivative(Activation act, const Matrix& pre) {
  if (act == Activation::kRelu) {
    return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  }
  return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

void checkTheta(const Mlp& net, const Vector& theta) {
  if (theta.size() != net.dim()) throw InputError("parameter vector length does not match layout");
  if (!theta.allFinite()) {
    Index bad = -1;
    for (Index i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(theta[i])) {
        bad = i;
        break;
      }
    }
    throw NumericError("non-finite parameter entry", bad);
  }
}

void checkBatchX(const Mlp& net, const Matrix& X) {
  if (X.cols() != net.inputWidth()) throw InputError("feature width does not match network input width");
}

// Forward pass keeping pre-activations and activations for the backward pass.
struct ForwardCache {
  std::vector<Matrix> activations;      // a_0 = X, ..., a_L = output
  std::vector<Matrix> pre_activations;  // z_1 ... z_L
};

Matrix forwardImpl(const Mlp& net, const Vector& theta_eff, const Matrix& X, ForwardCache* cache) {
  const auto& layers = net.layout().layers;
  Matrix a = X;
  if (cache) cache->activations.push_back(a);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& blk = layers[l];
    RowMajorMap W(theta_eff.data() + blk.weight_offset, blk.out, blk.in);
    const auto b = theta_eff.segment(blk.bias_offset, blk.out);
    Matrix z = (a * W.transpose()).rowwise() + b.transpose();
    if (cache) cache->pre_activations.push_back(z);
    if (l + 1 < layers.size()) applyActivation(net.spec().activation, z);
    a = std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

Matrix softmaxRows(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

std::string toString(Activation a) { return a == Activation::kRelu ? "relu" : "elu"; }
std::string toString(Task t) {
  return t == Task::kRegressionHomoscedastic ? "regression_homoscedastic" : "classification";
}

Activation activationFromString(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "elu") return Activation::kElu;
  throw ConfigError("unknown activation: " + s);
}

Task taskFromString(const std::string& s) {
  if (s == "regression_homoscedastic") return Task::kRegressionHomoscedastic;
  if (s == "classification") return Task::kClassification;
  throw ConfigError("unknown task: " + s);
}

Mlp::Mlp(MlpSpec spec, bool bias_sorted, std::optional<bool> include_log_sigma)
    : spec_(std::move(spec)) {
  if (spec_.layer_widths.size() < 3) throw ConfigError("network needs at least one hidden layer");
  for (int w : spec_.layer_widths) {
    if (w < 1) throw ConfigError("layer widths must be positive");
  }
  const bool log_sigma =
      include_log_sigma.value_or(spec_.task == Task::kRegressionHomoscedastic);
  if (log_sigma && spec_.task != Task::kRegressionHomoscedastic) {
    throw ConfigError("log-sigma applies to homoscedastic regression only");
  }
  Index offset = 0;
  for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
    LayerBlock blk;
    blk.in = spec_.layer_widths[l];
    blk.out = spec_.layer_widths[l + 1];
    blk.weight_offset = offset;
    offset += blk.in * blk.out;
    blk.bias_offset = offset;
    offset += blk.out;
    layout_.layers.push_back(blk);
  }
  layout_.includes_log_sigma = log_sigma;
  if (log_sigma) {
    layout_.log_sigma_offset = offset;
    offset += 1;
  }
  layout_.dim = offset;
  layout_.bias_sorted = bias_sorted;
}

Vector biasSortTransform(const Mlp& net, const Vector& raw) {
  if (raw.size() != net.dim()) throw InputError("parameter vector length does not match layout");
  Vector out = raw;
  for (const auto& blk : net.layout().layers) {
    double run = raw[blk.bias_offset];
    out[blk.bias_offset] = run;
    for (Index j = 1; j < blk.out; ++j) {
      run += softplus(raw[blk.bias_offset + j]);
      out[blk.bias_offset + j] = run;
    }
  }
  return out;
}

Matrix forward(const Mlp& net, const Vector& theta, const Matrix& X) {
  checkTheta(net, theta);
  checkBatchX(net, X);
  const Vector theta_eff = net.layout().bias_sorted ? biasSortTransform(net, theta) : theta;
  return forwardImpl(net, theta_eff, X, nullptr);
}

LossGrad lossAndGrad(const Mlp& net, const Vector& theta, const Matrix& X, const Vector& y) {
  checkTheta(net, theta);
  checkBatchX(net, X);
  if (X.rows() == 0) throw InputError("batch must be nonempty");
  if (y.size() != X.rows()) throw InputError("target length does not match batch size");

  const Vector theta_eff = net.layout().bias_sorted ? biasSortTransform(net, theta) : theta;
  ForwardCache cache;
  const Matrix out = forwardImpl(net, theta_eff, X, &cache);
  const double n = static_cast<double>(X.rows());

  double loss = 0.0;
  Matrix delta;  // d loss / d output
  double grad_log_sigma = 0.0;

  if (net.spec().task == Task::kRegressionHomoscedastic) {
    if (out.cols() != 1) throw InputError("homoscedastic regression expects a single output");
    const double log_sigma =
        net.layout().includes_log_sigma ? theta_eff[net.layout().log_sigma_offset] : 0.0;
    const double inv_var = std::exp(-2.0 * log_sigma);
    const Vector resid = out.col(0) - y;
    const double mse = resid.squaredNorm() / n;
    loss = 0.5 * std::log(2.0 * std::numbers::pi) + log_sigma + 0.5 * mse * inv_var;
    delta = (resid * (inv_var / n)).matrix();
    grad_log_sigma = 1.0 - mse * inv_var;
  } else {
    const Matrix probs = softmaxRows(out);
    delta = probs / n;
    for (Index i = 0; i < out.rows(); ++i) {
      const auto label = static_cast<Index>(y[i]);
      if (label < 0 || label >= out.cols()) throw InputError("class label out of range");
      const double m = out.row(i).maxCoeff();
      const double lse = m + std::log((out.row(i).array() - m).exp().sum());
      loss += (lse - out(i, label)) / n;
      delta(i, label) -= 1.0 / n;
    }
  }

  if (!std::isfinite(loss)) {
    throw NumericError("loss evaluated to a non-finite value", -1);
  }

  // Backward pass.
  const auto& layers = net.layout().layers;
  Vector grad_eff = Vector::Zero(net.dim());
  if (net.layout().includes_log_sigma) grad_eff[net.layout().log_sigma_offset] = grad_log_sigma;
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const auto& blk = layers[static_cast<std::size_t>(l)];
    const Matrix& a_prev = cache.activations[static_cast<std::size_t>(l)];
    RowMajorMapMut gW(grad_eff.data() + blk.weight_offset, blk.out, blk.in);
    gW = delta.transpose() * a_prev;
    grad_eff.segment(blk.bias_offset, blk.out) = delta.colwise().sum().transpose();
    if (l > 0) {
      RowMajorMap W(theta_eff.data() + blk.weight_offset, blk.out, blk.in);
      const Matrix dact =
          activationDerivative(net.spec().activation, cache.pre_activations[static_cast<std::size_t>(l - 1)]);
      delta = (delta * W).cwiseProduct(dact);
    }
  }

  // Chain through the bias-sorting reparameterization: raw gradient of bias j
  // is the suffix sum of effective-bias gradients, scaled by softplus'(raw_j)
  // for j > 0.
  LossGrad result;
  result.loss = loss;
  if (net.layout().bias_sorted) {
    Vector grad_raw = grad_eff;
    for (const auto& blk : layers) {
      double suffix = 0.0;
      for (Index j = blk.out - 1; j >= 0; --j) {
        suffix += grad_eff[blk.bias_offset + j];
        grad_raw[blk.bias_offset + j] =
            j == 0 ? suffix : sigmoid(theta[blk.bias_offset + j]) * suffix;
      }
    }
    result.grad = std::move(grad_raw);
  } else {
    result.grad = std::move(grad_eff);
  }
  return result;
}

double meanNll(const Mlp& net, const Vector& theta, const Matrix& X, const Vector& y) {
  return pointLogDensities(net, theta, X, y).mean() * -1.0;
}

Vector pointLogDensities(const Mlp& net, const Vector& theta, const Matrix& X, const Vector& y) {
  if (theta.size() != net.dim()) throw InputError("parameter vector length does not match layout");
  checkBatchX(net, X);
  if (y.size() != X.rows()) throw InputError("target length does not match batch size");
  if (X.rows() == 0) throw InputError("batch must be nonempty");
  if (!theta.allFinite()) {
    return Vector::Constant(X.rows(), -std::numeric_limits<double>::infinity());
  }
  const Vector theta_eff = net.layout().bias_sorted ? biasSortTransform(net, theta) : theta;
  const Matrix out = forwardImpl(net, theta_eff, X, nullptr);
  Vector log_dens(X.rows());
  if (net.spec().task == Task::kRegressionHomoscedastic) {
    const double log_sigma =
        net.layout().includes_log_sigma ? theta_eff[net.layout().log_sigma_offset] : 0.0;
    const double inv_var = std::exp(-2.0 * log_sigma);
    const double norm_const = 0.5 * std::log(2.0 * std::numbers::pi) + log_sigma;
    for (Index i = 0; i < X.rows(); ++i) {
      const double r = out(i, 0) - y[i];
      log_dens[i] = -(norm_const + 0.5 * r * r * inv_var);
    }
  } else {
    for (Index i = 0; i < X.rows(); ++i) {
      const auto label = static_cast<Index>(y[i]);
      if (label < 0 || label >= out.cols()) throw InputError("class label out of range");
      const double m = out.row(i).maxCoeff();
      const double lse = m + std::log((out.row(i).array() - m).exp().sum());
      log_dens[i] = out(i, label) - lse;
    }
  }
  return log_dens;
}

Vector init(const Mlp& net, std::uint64_t seed, const InitScheme& scheme) {
  RngEngine rng = makeStream(seed, 0);
  Vector theta(net.dim());
  for (const auto& blk : net.layout().layers) {
    if (scheme.kind == InitScheme::Kind::kUniformFanIn) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(blk.in));
      for (Index i = 0; i < blk.in * blk.out; ++i) {
        theta[blk.weight_offset + i] = uniformRange(rng, -bound, bound);
      }
      for (Index i = 0; i < blk.out; ++i) {
        theta[blk.bias_offset + i] = uniformRange(rng, -bound, bound);
      }
    } else {
      const double sd = scheme.kind == InitScheme::Kind::kNormal
                            ? scheme.sigma
                            : scheme.sigma / std::sqrt(static_cast<double>(blk.in));
      for (Index i = 0; i < blk.in * blk.out; ++i) {
        theta[blk.weight_offset + i] = sd * standardNormal(rng);
      }
      for (Index i = 0; i < blk.out; ++i) {
        theta[blk.bias_offset + i] = sd * standardNormal(rng);
      }
    }
  }
  if (net.layout().includes_log_sigma) theta[net.layout().log_sigma_offset] = 0.0;
  return theta;
}

}  // namespace losstunnel::mlp
