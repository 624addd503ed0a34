#ifndef LOSSTUNNEL_METRICS_HPP
#define LOSSTUNNEL_METRICS_HPP

#include "losstunnel/dataset.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::metrics {

/// Log pointwise predictive density from per-point per-draw log densities
/// (rows: observations, columns: draws): mean_i log( (1/U) sum_u p_iu ),
/// evaluated with log-sum-exp.
double lppd(const Matrix& log_densities);

/// Root mean squared error on the scale of the inputs.
double rmse(const Vector& predictions, const Vector& targets);

/// RMSE mapped back to the raw target scale.
double rmseDestandardized(const Vector& predictions, const Vector& targets,
                          const data::Standardization& stats);

/// Fraction of rows whose argmax logit equals the integer label.
double accuracy(const Matrix& logits, const Vector& labels);

}  // namespace losstunnel::metrics

#endif
