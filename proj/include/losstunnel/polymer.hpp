#ifndef LOSSTUNNEL_POLYMER_HPP
#define LOSSTUNNEL_POLYMER_HPP

#include <cstdint>
#include <vector>

#include "losstunnel/bezier.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::polymer {

/// Noise-driven control-point chain in a flat landscape: per step one shared
/// noise vector is dispatched to every control point with its Bernstein
/// weight, mirroring the pathfinding update with the loss gradient removed.
struct PolymerConfig {
  int degree = 10;          // K
  Index dim = 55;           // D
  double noise_sigma = 1.0; // sigma
  double learning_rate = 1.0;
  long steps = 1000;        // n
  int repetitions = 1;      // R
  long record_stride = 100;
  std::vector<long> record_steps;  // explicit record points; overrides stride
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bezier::QuadratureConfig quadrature{bezier::QuadratureConfig::Rule::kCompositeSimpson, 64};
};

/// Geometric summary of one control-point chain.
struct ChainObservables {
  double com = 0.0;       // ||mean - reference mean|| (reference 0 if absent)
  double re = 0.0;        // end-to-end distance
  double rg = 0.0;        // radius of gyration
  double lambda_k = 0.0;  // control-polygon length
  double s = 0.0;         // Bezier arc length
};

/// Exact chain geometry; `com_reference` is the mean the displacement is
/// measured against (zero vector when null).
ChainObservables chainMetrics(const Matrix& control,
                              const bezier::QuadratureConfig& quad = bezier::QuadratureConfig{},
                              const Vector* com_reference = nullptr);

/// Simulation trace averaged over repetitions. Columns in the tables:
/// com, re, rg, lambda_k, s. `mean_sq`/`se_sq` hold the second moments,
/// which the end-to-end law is stated in.
struct PolymerTrace {
  std::vector<long> steps;
  std::vector<double> eff_time;  // n * eta^2 * sigma^2
  Matrix mean;
  Matrix se;
  Matrix mean_sq;
  Matrix se_sq;
  int repetitions = 0;
};

enum class Observable { kCom = 0, kRe = 1, kRg = 2, kLambdaK = 3, kArcLength = 4 };

PolymerTrace simulate(const PolymerConfig& config);

/// Diffusion law for the center-of-mass displacement after n steps:
/// sqrt(n * eta^2 * sigma^2) * sqrt(D) / (K+1).
double analyticCom(double n, double eta, double sigma, double dim, double degree);

/// Expected squared end-to-end distance: eta^2 sigma^2 n D * I_K with
/// I_K = 2/(2K+1) - 2 (K!)^2 / (2K+1)!, evaluated in log-gamma space.
double analyticRe2(double n, double eta, double sigma, double dim, int degree);

/// The I_K integral alone.
double endToEndIntegral(int degree);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// log-log least squares of values against x.
ScalingFit fitPowerLaw(const std::vector<double>& x, const std::vector<double>& values);

/// Fit of one trace column over the effective-time window [min_eff, max_eff].
ScalingFit fitScaling(const PolymerTrace& trace, Observable what, double min_eff, double max_eff);

}  // namespace losstunnel::polymer

#endif
