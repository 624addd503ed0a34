#include "losstunnel/pathopt.hpp"

#include <algorithm>
#include <cmath>

#include "losstunnel/rng.hpp"

namespace losstunnel::pathopt {

namespace {

class PathOptimizer {
 public:
  PathOptimizer(const TrainConfig& config, Index rows, Index cols) : config_(config) {
    if (config.optimizer == OptimizerKind::kAdam) {
      m_ = Matrix::Zero(rows, cols);
      v_ = Matrix::Zero(rows, cols);
    }
  }

  // grad holds the dispatched loss gradient (no decay). SGD applies decay as a
  // separate shrink so the update mirrors the noise-driven chain dynamics;
  // Adam folds decay into the gradient before the moment updates.
  void step(Matrix& lambda, Matrix& grad) {
    const Index last = lambda.rows() - 1;
    const double lr = config_.learning_rate;
    const double wd = config_.weight_decay;
    if (config_.optimizer == OptimizerKind::kSgd) {
      for (Index k = 0; k <= last; ++k) {
        if (frozen(k, last)) continue;
        lambda.row(k) -= lr * grad.row(k);
        if (wd > 0.0) lambda.row(k) -= (lr * wd) * lambda.row(k);
      }
      return;
    }
    ++steps_;
    if (wd > 0.0) grad += wd * lambda;
    m_ = config_.adam.beta1 * m_ + (1.0 - config_.adam.beta1) * grad;
    v_ = config_.adam.beta2 * v_ + (1.0 - config_.adam.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.adam.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.adam.beta2, static_cast<double>(steps_));
    for (Index k = 0; k <= last; ++k) {
      if (frozen(k, last)) continue;
      lambda.row(k) -=
          (lr / c1) * (m_.row(k).array() / ((v_.row(k) / c2).cwiseSqrt().array() + config_.adam.epsilon))
              .matrix();
    }
  }

 private:
  bool frozen(Index k, Index last) const {
    return config_.freeze_endpoints && (k == 0 || k == last);
  }

  const TrainConfig& config_;
  Matrix m_, v_;
  long steps_ = 0;
};

// One dispatched sample: grad.row(k) += (omega_k * weight / M) * g.
void accumulateDispatch(Matrix& grad, const Vector& omega, double weight, int samples,
                        const Vector& g) {
  for (Index k = 0; k < grad.rows(); ++k) {
    grad.row(k) += ((omega[k] * weight) / samples) * g.transpose();
  }
}

void checkConfig(const TrainConfig& config) {
  if (config.learning_rate <= 0.0) throw ConfigError("learning rate must be > 0");
  if (config.samples_per_step < 1) throw ConfigError("samples per step (M) must be >= 1");
  if (config.weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (config.early_stop.grid_points < 2) throw ConfigError("validation grid needs >= 2 points");
  if (config.early_stop.eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

}  // namespace

double importanceWeight(const Matrix& control, double t, const bezier::QuadratureConfig& quad,
                        bool* degenerate) {
  if (degenerate) *degenerate = false;
  const double total = bezier::totalArcLength(control, quad);
  if (total <= 0.0) {
    if (degenerate) *degenerate = true;
    return 1.0;
  }
  return bezier::derivative(control, t, 1).norm() / total;
}

double pathValidationScore(const mlp::Mlp& net, const Matrix& control, const Matrix& X,
                           const Vector& y, int grid_points) {
  if (grid_points < 2) throw ConfigError("validation grid needs >= 2 points");
  double total = 0.0;
  for (int i = 0; i < grid_points; ++i) {
    const double t = static_cast<double>(i) / (grid_points - 1);
    total += -mlp::meanNll(net, bezier::evaluate(control, t), X, y);
  }
  return total / grid_points;
}

TrainResult trainPath(const mlp::Mlp& net, const Matrix& lambda_init, const data::Dataset& dataset,
                      const TrainConfig& config) {
  checkConfig(config);
  if (lambda_init.cols() != net.dim()) {
    throw InputError("control-point width does not match parameter dimension");
  }
  if (lambda_init.rows() < 1) throw InputError("need at least one control point");
  if (dataset.X_train.rows() == 0) throw ConfigError("training split is empty");
  if (dataset.X_val.rows() == 0) throw ConfigError("validation split is empty");

  const Index n = dataset.X_train.rows();
  const Index batch = (config.batch_size <= 0 || config.batch_size >= n) ? n : config.batch_size;
  const int degree = static_cast<int>(lambda_init.rows()) - 1;
  const int grid = config.early_stop.grid_points;

  RngEngine rng = makeStream(config.seed, 0);
  Matrix lambda = lambda_init;
  const Vector com_start = lambda_init.colwise().mean();
  PathOptimizer optimizer(config, lambda.rows(), lambda.cols());

  TrainResult result;
  result.best_val_score =
      pathValidationScore(net, lambda, dataset.X_val, dataset.y_val, grid);
  result.best_epoch = 0;
  result.control = lambda;
  double last_val_score = result.best_val_score;

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  long next_record = 1;
  int evals_since_best = 0;
  Matrix grad(lambda.rows(), lambda.cols());

  auto record = [&](long epoch, double loss, double grad_norm) {
    const polymer::ChainObservables obs = polymer::chainMetrics(lambda, config.quadrature);
    TraceRow row;
    row.epoch = epoch;
    row.loss = loss;
    row.val_score = last_val_score;
    row.arc_length = obs.s;
    row.re = obs.re;
    row.rg = obs.rg;
    row.lambda_k = obs.lambda_k;
    row.com = (lambda.colwise().mean().transpose() - com_start).norm();
    row.grad_norm = grad_norm;
    result.trace.rows.push_back(row);
  };

  for (long epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < n) {
      for (Index i = n - 1; i > 0; --i) {
        const Index j = static_cast<Index>(uniform01(rng) * static_cast<double>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
    }
    double epoch_loss = 0.0;
    double epoch_grad_norm = 0.0;
    long batches = 0;
    bool aborted = false;

    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      Matrix Xb(len, dataset.X_train.cols());
      Vector yb(len);
      if (batch >= n) {
        Xb = dataset.X_train;
        yb = dataset.y_train;
      } else {
        for (Index i = 0; i < len; ++i) {
          Xb.row(i) = dataset.X_train.row(order[static_cast<std::size_t>(start + i)]);
          yb[i] = dataset.y_train[order[static_cast<std::size_t>(start + i)]];
        }
      }

      grad.setZero();
      double batch_loss = 0.0;
      try {
        for (int m = 0; m < config.samples_per_step; ++m) {
          const double t_star = uniform01(rng);
          const Vector theta = bezier::evaluate(lambda, t_star);
          const mlp::LossGrad lg = mlp::lossAndGrad(net, theta, Xb, yb);
          double weight = 1.0;
          if (config.objective == Objective::kArcLengthIs) {
            weight = importanceWeight(lambda, t_star, config.quadrature);
          }
          const Vector omega = bezier::bernsteinWeights(degree, t_star);
          accumulateDispatch(grad, omega, weight, config.samples_per_step, lg.grad);
          batch_loss += lg.loss / config.samples_per_step;
        }
      } catch (const NumericError&) {
        aborted = true;
        break;
      }
      epoch_grad_norm = grad.rowwise().norm().sum();
      optimizer.step(lambda, grad);
      epoch_loss += batch_loss;
      ++batches;
    }

    if (aborted || !lambda.allFinite()) {
      result.aborted_non_finite = true;
      break;
    }
    epoch_loss /= std::max<long>(batches, 1);

    if (epoch % config.early_stop.eval_every == 0 || epoch == config.epochs) {
      last_val_score = pathValidationScore(net, lambda, dataset.X_val, dataset.y_val, grid);
      if (last_val_score > result.best_val_score) {
        result.best_val_score = last_val_score;
        result.best_epoch = epoch;
        result.control = lambda;
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
    }

    const bool should_record = !config.trace_log_binning || epoch <= 100 ||
                               epoch >= next_record || epoch == config.epochs;
    if (should_record) {
      record(epoch, epoch_loss, epoch_grad_norm);
      if (epoch > 100) {
        next_record = std::max<long>(epoch + 1, static_cast<long>(std::ceil(epoch * 1.1)));
      } else {
        next_record = epoch + 1;
      }
    }

    if (config.early_stop.patience > 0 && evals_since_best >= config.early_stop.patience) break;
  }

  return result;
}

DynamicsResult runPathDynamics(Matrix lambda, const TrainConfig& config,
                               const GradientSource& grad_source, long steps,
                               const std::vector<long>& record_steps) {
  checkConfig(config);
  const int degree = static_cast<int>(lambda.rows()) - 1;
  RngEngine rng = makeStream(config.seed, 0);
  PathOptimizer optimizer(config, lambda.rows(), lambda.cols());
  const Vector com_start = lambda.colwise().mean();

  std::vector<long> records = record_steps;
  std::sort(records.begin(), records.end());
  DynamicsResult out;
  out.trace.reserve(records.size());
  std::size_t next = 0;
  Matrix grad(lambda.rows(), lambda.cols());

  for (long step = 1; step <= steps; ++step) {
    grad.setZero();
    for (int m = 0; m < config.samples_per_step; ++m) {
      const double t_star = uniform01(rng);
      const Vector theta = bezier::evaluate(lambda, t_star);
      const auto [loss, g] = grad_source(theta, rng);
      (void)loss;
      double weight = 1.0;
      if (config.objective == Objective::kArcLengthIs) {
        weight = importanceWeight(lambda, t_star, config.quadrature);
      }
      const Vector omega = bezier::bernsteinWeights(degree, t_star);
      accumulateDispatch(grad, omega, weight, config.samples_per_step, g);
    }
    optimizer.step(lambda, grad);
    if (next < records.size() && records[next] == step) {
      out.trace.push_back(polymer::chainMetrics(lambda, config.quadrature, &com_start));
      ++next;
    }
  }
  out.control = std::move(lambda);
  return out;
}

}  // namespace losstunnel::pathopt
