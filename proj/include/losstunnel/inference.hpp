#ifndef LOSSTUNNEL_INFERENCE_HPP
#define LOSSTUNNEL_INFERENCE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "losstunnel/mlp.hpp"
#include "losstunnel/rng.hpp"
#include "losstunnel/tunnel.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::infer {

enum class PriorKind { kVolumeGauss, kTunnelT, kTunnelS };

std::string toString(PriorKind k);
PriorKind priorKindFromString(const std::string& s);

struct PriorSpec {
  PriorKind kind = PriorKind::kTunnelS;
  double sigma = 1.0;  // xi scale for tunnel priors, phi scale for volume
  tunnel::VolumeMode adjustment = tunnel::VolumeMode::kSpeedOnly;
};

/// Geometry shared by every posterior evaluation: curve, basis, frames and
/// cached total arc length.
struct Lifting {
  Matrix control;
  tunnel::SubspaceBasis basis;
  tunnel::FrameTable table;
  double total_arc_length = 0.0;
};

Lifting makeLifting(Matrix control, int frame_resolution = 1000, double threshold_deg = 45.0,
                    const bezier::QuadratureConfig& quad = bezier::QuadratureConfig{});

/// Tempered posterior over sampler coordinates. Tunnel kinds use
/// coord = (t, xi...); kVolumeGauss uses coord = phi. Unnormalized.
struct PosteriorTarget {
  const mlp::Mlp* net = nullptr;
  const Matrix* X = nullptr;
  const Vector* y = nullptr;
  const Lifting* lifting = nullptr;
  PriorSpec prior;
  double temperature = 1.0;  // finite positive, or +inf for the prior alone
};

Index coordDim(const PosteriorTarget& target);

/// Ambient parameters of a sampler coordinate.
Vector liftCoordinate(const PosteriorTarget& target, const Vector& coord);

/// Sum of per-point log-likelihoods at the lifted parameters.
double logLikelihood(const PosteriorTarget& target, const Vector& coord);

/// (1/T) log p(D|theta(coord)) + log prior + volume adjustment.
/// Tunnel-t: t ~ U(0,1), xi ~ N(0, sigma^2 I). Tunnel-s additionally carries
/// the change of variables that makes arc length uniform: the log volume
/// element minus log S. Out-of-domain coordinates map to -inf.
double logPosterior(const PosteriorTarget& target, const Vector& coord);

/// Gradient of logPosterior: xi (and phi) components are analytic through the
/// projection and frame; the t component uses central differences with step
/// 1/(10 * frame resolution), one-sided at the domain ends (flagged).
Vector gradLogPosterior(const PosteriorTarget& target, const Vector& coord,
                        bool* boundary_warning = nullptr);

/// Sampler-facing view of a distribution; kept generic so calibration tests
/// can plug in closed-form targets.
struct TargetDensity {
  Index dim = 0;
  std::function<double(const Vector&)> log_density;
  std::function<Vector(const Vector&)> grad;  // empty: gradient-free kernels only
  std::function<Vector(RngEngine&)> initial_state;
  std::vector<std::pair<double, double>> bounds;  // reflective bounds per dim (HMC)
};

TargetDensity makeTargetDensity(const PosteriorTarget& target);

struct RwmhSettings {
  Vector scales;  // per-dim proposal scales; empty = 0.5 everywhere
};

struct HmcSettings {
  double step_size = 0.05;
  int leapfrog_steps = 16;
};

struct SamplerConfig {
  enum class Kernel { kRwmh, kHmc };
  Kernel kernel = Kernel::kRwmh;
  RwmhSettings rwmh;
  HmcSettings hmc;
  int chains = 2;
  int warmup = 500;
  int draws = 1000;
  int thinning = 1;
  std::uint64_t seed = 0;
};

struct ChainStats {
  double warmup_acceptance = 0.0;
  double acceptance = 0.0;
  Vector final_scales;           // RWMH proposal scales after adaptation
  long divergences = 0;          // HMC |dH| blowups
  double median_abs_energy_error = 0.0;
};

struct SampleSet {
  std::vector<Matrix> coords;  // per chain: draws x dim
  Matrix log_posterior;        // chains x draws
  std::vector<ChainStats> stats;
  std::string provenance;
};

/// Gaussian random-walk Metropolis-Hastings. Warmup adapts the proposal
/// scales toward an acceptance rate in [0.2, 0.4]; chains run on independent
/// RNG streams and in parallel. Throws if warmup acceptance stays below 1%.
SampleSet runMh(const TargetDensity& target, const SamplerConfig& config);

/// Hamiltonian Monte Carlo with leapfrog integration, reflective handling of
/// bounded coordinates, and a Metropolis correction on the Hamiltonian error.
SampleSet runHmc(const TargetDensity& target, const SamplerConfig& config);

/// Per-draw predictive log-densities and mean predictions at new inputs, for
/// every retained draw across chains (regression targets).
struct Predictions {
  Matrix log_density;  // n_obs x total draws
  Matrix mean;         // n_obs x total draws
};

Predictions posteriorPredict(const PosteriorTarget& target, const SampleSet& samples,
                             const Matrix& X, const Vector& y);

/// Draws of one scalar coordinate dimension, one vector per chain.
std::vector<Vector> extractDimension(const SampleSet& samples, Index dim);

}  // namespace losstunnel::infer

#endif
