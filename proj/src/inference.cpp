#include "losstunnel/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "losstunnel/hashing.hpp"
#include "losstunnel/parallel.hpp"

namespace losstunnel::infer {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logGaussian(const Vector& x, double sigma) {
  const double d = static_cast<double>(x.size());
  return -0.5 * x.squaredNorm() / (sigma * sigma) -
         d * (0.5 * std::log(2.0 * std::numbers::pi) + std::log(sigma));
}

void checkTarget(const PosteriorTarget& target) {
  if (!target.net || !target.X || !target.y || !target.lifting) {
    throw ConfigError("posterior target is missing a component");
  }
  if (!(target.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(target.prior.sigma > 0.0)) throw ConfigError("prior sigma must be positive");
}

// Sum of log-likelihoods; non-finite values are mapped to -inf, never thrown.
double sumLogLik(const PosteriorTarget& target, const Vector& theta) {
  if (!theta.allFinite()) return kNegInf;
  const double nll = mlp::meanNll(*target.net, theta, *target.X, *target.y);
  if (!std::isfinite(nll)) return kNegInf;
  return -nll * static_cast<double>(target.X->rows());
}

double chainMedian(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  return values[mid];
}

std::string samplerProvenance(const SamplerConfig& config, Index dim) {
  const std::string text =
      "kernel=" + std::to_string(static_cast<int>(config.kernel)) +
      ";chains=" + std::to_string(config.chains) + ";warmup=" + std::to_string(config.warmup) +
      ";draws=" + std::to_string(config.draws) + ";thin=" + std::to_string(config.thinning) +
      ";seed=" + std::to_string(config.seed) + ";dim=" + std::to_string(dim);
  return hashString(text);
}

void checkSamplerConfig(const SamplerConfig& config) {
  if (config.chains < 1) throw ConfigError("need at least one chain");
  if (config.draws < 10) throw ConfigError("need at least 10 draws");
  if (config.warmup < 0) throw ConfigError("warmup must be >= 0");
  if (config.thinning < 1) throw ConfigError("thinning must be >= 1");
}

Vector initialState(const TargetDensity& target, RngEngine& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Vector x = target.initial_state(rng);
    if (std::isfinite(target.log_density(x))) return x;
  }
  throw std::runtime_error("could not find a finite-density initial state in 100 attempts");
}

}  // namespace

std::string toString(PriorKind k) {
  switch (k) {
    case PriorKind::kVolumeGauss: return "volume";
    case PriorKind::kTunnelT: return "tunnel-t";
    case PriorKind::kTunnelS: return "tunnel-s";
  }
  return "?";
}

PriorKind priorKindFromString(const std::string& s) {
  if (s == "volume") return PriorKind::kVolumeGauss;
  if (s == "tunnel-t") return PriorKind::kTunnelT;
  if (s == "tunnel-s") return PriorKind::kTunnelS;
  throw ConfigError("unknown prior kind: " + s + " (expected volume, tunnel-t or tunnel-s)");
}

Lifting makeLifting(Matrix control, int frame_resolution, double threshold_deg,
                    const bezier::QuadratureConfig& quad) {
  Lifting lifting;
  lifting.basis = tunnel::buildBasis(control);
  lifting.table = tunnel::buildFrameTable(control, lifting.basis, frame_resolution, threshold_deg);
  lifting.total_arc_length = bezier::totalArcLength(control, quad);
  lifting.control = std::move(control);
  return lifting;
}

Index coordDim(const PosteriorTarget& target) {
  checkTarget(target);
  // volume: phi in R^r; tunnel: (t, xi) with xi in R^(r-1) -- length r either way
  return target.lifting->basis.effective_rank;
}

Vector liftCoordinate(const PosteriorTarget& target, const Vector& coord) {
  checkTarget(target);
  if (coord.size() != coordDim(target)) throw InputError("coordinate length mismatch");
  const Lifting& lift = *target.lifting;
  if (target.prior.kind == PriorKind::kVolumeGauss) {
    return tunnel::volumeLift(lift.basis, coord);
  }
  const auto tc = tunnel::TunnelCoordinate::time(coord[0], coord.tail(coord.size() - 1));
  return tunnel::lift(lift.table, lift.control, lift.basis, tc);
}

double logLikelihood(const PosteriorTarget& target, const Vector& coord) {
  return sumLogLik(target, liftCoordinate(target, coord));
}

double logPosterior(const PosteriorTarget& target, const Vector& coord) {
  checkTarget(target);
  if (coord.size() != coordDim(target)) throw InputError("coordinate length mismatch");
  const Lifting& lift = *target.lifting;
  const double inv_temp = 1.0 / target.temperature;

  double log_prior = 0.0;
  Vector theta;
  if (target.prior.kind == PriorKind::kVolumeGauss) {
    log_prior = logGaussian(coord, target.prior.sigma);
    theta = tunnel::volumeLift(lift.basis, coord);
  } else {
    const double t = coord[0];
    if (!(t >= 0.0 && t <= 1.0)) return kNegInf;
    const Vector xi = coord.tail(coord.size() - 1);
    log_prior = logGaussian(xi, target.prior.sigma);
    if (target.prior.kind == PriorKind::kTunnelS) {
      const auto tc = tunnel::TunnelCoordinate::time(t, xi);
      const double adj =
          tunnel::logVolumeAdjustment(lift.table, lift.control, lift.basis, tc, target.prior.adjustment);
      if (!std::isfinite(adj)) return kNegInf;
      log_prior += adj - std::log(lift.total_arc_length);
    }
    const auto tc = tunnel::TunnelCoordinate::time(t, xi);
    theta = tunnel::lift(lift.table, lift.control, lift.basis, tc);
  }
  if (!std::isfinite(log_prior)) return kNegInf;

  if (inv_temp == 0.0) return log_prior;  // T -> inf: the prior alone
  const double ll = sumLogLik(target, theta);
  if (!std::isfinite(ll)) return kNegInf;
  return inv_temp * ll + log_prior;
}

Vector gradLogPosterior(const PosteriorTarget& target, const Vector& coord, bool* boundary_warning) {
  checkTarget(target);
  if (coord.size() != coordDim(target)) throw InputError("coordinate length mismatch");
  if (boundary_warning) *boundary_warning = false;
  const Lifting& lift = *target.lifting;
  const double inv_temp = 1.0 / target.temperature;
  Vector grad = Vector::Zero(coord.size());

  // ambient-space likelihood gradient (sum over points); zero when the
  // evaluation leaves the finite range -- the density is -inf there anyway
  auto theta_grad = [&](const Vector& theta) -> Vector {
    if (inv_temp == 0.0) return Vector::Zero(theta.size());
    try {
      const mlp::LossGrad lg = mlp::lossAndGrad(*target.net, theta, *target.X, *target.y);
      return (-static_cast<double>(target.X->rows())) * lg.grad;
    } catch (const NumericError&) {
      return Vector::Zero(theta.size());
    }
  };

  if (target.prior.kind == PriorKind::kVolumeGauss) {
    const Vector theta = tunnel::volumeLift(lift.basis, coord);
    grad = inv_temp * (lift.basis.projection.transpose() * theta_grad(theta));
    grad -= coord / (target.prior.sigma * target.prior.sigma);
    return grad;
  }

  const double t = coord[0];
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("t must lie in [0,1] for gradient evaluation");
  const Vector xi = coord.tail(coord.size() - 1);
  const tunnel::Frame frame = tunnel::frameAt(lift.table, lift.control, lift.basis, t);
  const auto tc = tunnel::TunnelCoordinate::time(t, xi);
  const Vector theta = tunnel::lift(lift.table, lift.control, lift.basis, tc);
  const Vector g_theta = theta_grad(theta);

  // xi components: chain rule through the projection and the local normals
  const Matrix ambient_normals = lift.basis.projection * frame.normals;  // D x (r-1)
  grad.tail(coord.size() - 1) =
      inv_temp * (ambient_normals.transpose() * g_theta) -
      xi / (target.prior.sigma * target.prior.sigma);
  if (target.prior.kind == PriorKind::kTunnelS &&
      target.prior.adjustment == tunnel::VolumeMode::kFullJacobian) {
    const Vector rates = tunnel::normalRotationRates(lift.table, lift.control, lift.basis, t);
    const double det = tunnel::curveVelocity(lift.control, lift.basis, t).norm() + xi.dot(rates);
    if (det > 0.0) grad.tail(coord.size() - 1) += rates / det;
  }

  // t component: central differences of the full log-posterior
  const double h = 1.0 / (10.0 * lift.table.resolution);
  auto lp_at = [&](double tv) {
    Vector c = coord;
    c[0] = tv;
    return logPosterior(target, c);
  };
  if (t - h >= 0.0 && t + h <= 1.0) {
    grad[0] = (lp_at(t + h) - lp_at(t - h)) / (2.0 * h);
  } else if (t + h <= 1.0) {
    grad[0] = (lp_at(t + h) - lp_at(t)) / h;
    if (boundary_warning) *boundary_warning = true;
  } else {
    grad[0] = (lp_at(t) - lp_at(t - h)) / h;
    if (boundary_warning) *boundary_warning = true;
  }
  return grad;
}

TargetDensity makeTargetDensity(const PosteriorTarget& target) {
  checkTarget(target);
  TargetDensity density;
  density.dim = coordDim(target);
  density.log_density = [target](const Vector& x) { return logPosterior(target, x); };
  density.grad = [target](const Vector& x) { return gradLogPosterior(target, x); };
  const double sigma = target.prior.sigma;
  if (target.prior.kind == PriorKind::kVolumeGauss) {
    const Index dim = density.dim;
    density.initial_state = [dim, sigma](RngEngine& rng) {
      return Vector(0.1 * sigma * normalVector(rng, dim));
    };
  } else {
    const Index dim = density.dim;
    density.initial_state = [dim, sigma](RngEngine& rng) {
      Vector x(dim);
      x[0] = uniform01(rng);
      x.tail(dim - 1) = 0.1 * sigma * normalVector(rng, dim - 1);
      return x;
    };
    density.bounds.assign(static_cast<std::size_t>(density.dim),
                          {-std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity()});
    density.bounds[0] = {0.0, 1.0};
  }
  return density;
}

SampleSet runMh(const TargetDensity& target, const SamplerConfig& config) {
  checkSamplerConfig(config);
  Vector base_scales = config.rwmh.scales;
  if (base_scales.size() == 0) base_scales = Vector::Constant(target.dim, 0.5);
  if (base_scales.size() != target.dim) throw ConfigError("proposal scale length mismatch");

  SampleSet set;
  set.coords.resize(static_cast<std::size_t>(config.chains));
  set.log_posterior.resize(config.chains, config.draws);
  set.stats.resize(static_cast<std::size_t>(config.chains));
  set.provenance = samplerProvenance(config, target.dim);

  // per-dimension spread adaptation engages only for defaulted scales;
  // explicitly configured scales are honored (including zero)
  const bool adapt_per_dim = config.rwmh.scales.size() == 0;

  parallelFor(config.chains, [&](Index chain) {
    RngEngine rng = makeStream(config.seed, static_cast<std::uint64_t>(chain));
    Vector x = initialState(target, rng);
    double lp = target.log_density(x);
    double log_adapt = 0.0;
    Vector dim_scales = base_scales;

    // Welford accumulators for the per-dimension chain spread
    Vector run_mean = x;
    Vector run_m2 = Vector::Zero(target.dim);
    long seen = 1;

    constexpr int kWindow = 50;
    long warm_accepts = 0;
    int window_accepts = 0;
    int window_count = 0;
    for (int i = 0; i < config.warmup; ++i) {
      const Vector z = normalVector(rng, target.dim);
      const Vector proposal = x + std::exp(log_adapt) * dim_scales.cwiseProduct(z);
      const double lp_new = target.log_density(proposal);
      if (std::log(std::max(uniform01(rng), 1e-300)) < lp_new - lp) {
        x = proposal;
        lp = lp_new;
        ++warm_accepts;
        ++window_accepts;
      }
      ++seen;
      const Vector delta = x - run_mean;
      run_mean += delta / static_cast<double>(seen);
      run_m2 += delta.cwiseProduct(x - run_mean);

      if ((i + 1) % kWindow == 0) {
        ++window_count;
        const double rate = static_cast<double>(window_accepts) / kWindow;
        if (rate < 0.2 || rate > 0.4) {
          log_adapt += (rate - 0.3) * 1.5 / std::sqrt(static_cast<double>(window_count));
        }
        window_accepts = 0;
        if (adapt_per_dim && seen > 2 * kWindow) {
          const Vector sd = (run_m2 / static_cast<double>(seen - 1)).cwiseSqrt();
          if (sd.minCoeff() > 0.0) dim_scales = sd;
        }
      }
    }
    if (config.warmup >= kWindow &&
        static_cast<double>(warm_accepts) / config.warmup < 0.01) {
      throw std::runtime_error(
          "warmup acceptance below 1%: reduce the proposal scales or reparameterize");
    }

    const Vector scales = std::exp(log_adapt) * dim_scales;
    Matrix draws(config.draws, target.dim);
    long accepts = 0;
    long proposals = 0;
    for (int d = 0; d < config.draws; ++d) {
      for (int s = 0; s < config.thinning; ++s) {
        const Vector z = normalVector(rng, target.dim);
        const Vector proposal = x + scales.cwiseProduct(z);
        const double lp_new = target.log_density(proposal);
        ++proposals;
        if (std::log(std::max(uniform01(rng), 1e-300)) < lp_new - lp) {
          x = proposal;
          lp = lp_new;
          ++accepts;
        }
      }
      draws.row(d) = x.transpose();
      set.log_posterior(chain, d) = lp;
    }
    set.coords[static_cast<std::size_t>(chain)] = std::move(draws);
    auto& st = set.stats[static_cast<std::size_t>(chain)];
    st.warmup_acceptance = config.warmup > 0 ? static_cast<double>(warm_accepts) / config.warmup : 0.0;
    st.acceptance = proposals > 0 ? static_cast<double>(accepts) / static_cast<double>(proposals) : 0.0;
    st.final_scales = scales;
  });
  return set;
}

namespace {

struct LeapfrogResult {
  Vector position;
  double log_density = 0.0;
  double energy_error = 0.0;
};

LeapfrogResult leapfrog(const TargetDensity& target, const HmcSettings& hmc, const Vector& x0,
                        double lp0, const Vector& p0) {
  const double h = hmc.step_size;
  Vector x = x0;
  Vector p = p0;
  Vector g = target.grad(x);
  p += 0.5 * h * g;
  for (int step = 0; step < hmc.leapfrog_steps; ++step) {
    x += h * p;
    if (!target.bounds.empty()) {
      for (Index d = 0; d < x.size(); ++d) {
        const auto [lo, hi] = target.bounds[static_cast<std::size_t>(d)];
        // reflect until the coordinate is back inside
        while (x[d] < lo || x[d] > hi) {
          if (x[d] < lo) x[d] = 2.0 * lo - x[d];
          if (x[d] > hi) x[d] = 2.0 * hi - x[d];
          p[d] = -p[d];
        }
      }
    }
    g = target.grad(x);
    p += (step + 1 < hmc.leapfrog_steps ? h : 0.5 * h) * g;
  }
  LeapfrogResult result;
  result.log_density = target.log_density(x);
  result.position = std::move(x);
  const double h0 = -lp0 + 0.5 * p0.squaredNorm();
  const double h1 = -result.log_density + 0.5 * p.squaredNorm();
  result.energy_error = h1 - h0;
  return result;
}

}  // namespace

SampleSet runHmc(const TargetDensity& target, const SamplerConfig& config) {
  checkSamplerConfig(config);
  if (!target.grad) throw ConfigError("HMC needs a gradient");
  if (!(config.hmc.step_size > 0.0)) throw ConfigError("HMC step size must be positive");
  if (config.hmc.leapfrog_steps < 1) throw ConfigError("HMC needs at least one leapfrog step");

  SampleSet set;
  set.coords.resize(static_cast<std::size_t>(config.chains));
  set.log_posterior.resize(config.chains, config.draws);
  set.stats.resize(static_cast<std::size_t>(config.chains));
  set.provenance = samplerProvenance(config, target.dim);

  parallelFor(config.chains, [&](Index chain) {
    RngEngine rng = makeStream(config.seed, static_cast<std::uint64_t>(chain));
    Vector x = initialState(target, rng);
    double lp = target.log_density(x);
    long accepts = 0, proposals = 0, divergences = 0;
    std::vector<double> energy_errors;

    auto transition = [&](bool record_energy) {
      const Vector p = normalVector(rng, target.dim);
      const LeapfrogResult leap = leapfrog(target, config.hmc, x, lp, p);
      const double u = uniform01(rng);
      ++proposals;
      if (record_energy && std::isfinite(leap.energy_error)) {
        energy_errors.push_back(std::abs(leap.energy_error));
      }
      if (!std::isfinite(leap.energy_error) || std::abs(leap.energy_error) > 1000.0) {
        ++divergences;
        return;
      }
      if (std::log(std::max(u, 1e-300)) < -leap.energy_error) {
        x = leap.position;
        lp = leap.log_density;
        ++accepts;
      }
    };

    for (int i = 0; i < config.warmup; ++i) transition(false);
    accepts = 0;
    proposals = 0;
    Matrix draws(config.draws, target.dim);
    for (int d = 0; d < config.draws; ++d) {
      for (int s = 0; s < config.thinning; ++s) transition(true);
      draws.row(d) = x.transpose();
      set.log_posterior(chain, d) = lp;
    }
    set.coords[static_cast<std::size_t>(chain)] = std::move(draws);
    auto& st = set.stats[static_cast<std::size_t>(chain)];
    st.acceptance = proposals > 0 ? static_cast<double>(accepts) / static_cast<double>(proposals) : 0.0;
    st.divergences = divergences;
    st.median_abs_energy_error = chainMedian(std::move(energy_errors));
  });
  return set;
}

Predictions posteriorPredict(const PosteriorTarget& target, const SampleSet& samples,
                             const Matrix& X, const Vector& y) {
  checkTarget(target);
  Index total = 0;
  for (const auto& chain : samples.coords) total += chain.rows();
  if (total == 0) throw InputError("sample set is empty");

  Predictions pred;
  pred.log_density.resize(X.rows(), total);
  pred.mean.resize(X.rows(), total);
  Index col = 0;
  for (const auto& chain : samples.coords) {
    for (Index d = 0; d < chain.rows(); ++d, ++col) {
      const Vector theta = liftCoordinate(target, chain.row(d).transpose());
      pred.log_density.col(col) = mlp::pointLogDensities(*target.net, theta, X, y);
      const Matrix out = mlp::forward(*target.net, theta, X);
      if (target.net->spec().task == mlp::Task::kRegressionHomoscedastic) {
        pred.mean.col(col) = out.col(0);
      } else {
        for (Index i = 0; i < out.rows(); ++i) {
          Index argmax = 0;
          out.row(i).maxCoeff(&argmax);
          pred.mean(i, col) = static_cast<double>(argmax);
        }
      }
    }
  }
  return pred;
}

std::vector<Vector> extractDimension(const SampleSet& samples, Index dim) {
  std::vector<Vector> out;
  out.reserve(samples.coords.size());
  for (const auto& chain : samples.coords) {
    if (dim < 0 || dim >= chain.cols()) throw InputError("dimension index out of range");
    out.push_back(chain.col(dim));
  }
  return out;
}

}  // namespace losstunnel::infer
