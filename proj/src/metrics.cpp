#include "losstunnel/metrics.hpp"

#include <cmath>

namespace losstunnel::metrics {

double lppd(const Matrix& log_densities) {
  if (log_densities.cols() < 1) throw InputError("lppd needs at least one draw");
  if (log_densities.rows() < 1) throw InputError("lppd needs at least one observation");
  const double log_u = std::log(static_cast<double>(log_densities.cols()));
  double total = 0.0;
  for (Index i = 0; i < log_densities.rows(); ++i) {
    const double m = log_densities.row(i).maxCoeff();
    if (!std::isfinite(m)) {
      total += m;  // all draws at zero density
      continue;
    }
    total += m + std::log((log_densities.row(i).array() - m).exp().sum()) - log_u;
  }
  return total / static_cast<double>(log_densities.rows());
}

double rmse(const Vector& predictions, const Vector& targets) {
  if (predictions.size() != targets.size()) throw InputError("rmse needs matching lengths");
  if (predictions.size() == 0) throw InputError("rmse needs at least one point");
  return std::sqrt((predictions - targets).squaredNorm() / static_cast<double>(predictions.size()));
}

double rmseDestandardized(const Vector& predictions, const Vector& targets,
                          const data::Standardization& stats) {
  return rmse(predictions, targets) * (stats.active ? stats.target_std : 1.0);
}

double accuracy(const Matrix& logits, const Vector& labels) {
  if (logits.rows() != labels.size()) throw InputError("accuracy needs matching lengths");
  if (logits.rows() == 0) throw InputError("accuracy needs at least one row");
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index argmax = 0;
    logits.row(i).maxCoeff(&argmax);
    if (argmax == static_cast<Index>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace losstunnel::metrics
