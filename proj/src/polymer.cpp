#include "losstunnel/polymer.hpp"

#include <algorithm>
#include <cmath>

#include "losstunnel/parallel.hpp"
#include "losstunnel/rng.hpp"

namespace losstunnel::polymer {

namespace {

constexpr int kColumns = 5;

std::vector<long> recordSteps(const PolymerConfig& config) {
  if (!config.record_steps.empty()) {
    std::vector<long> steps = config.record_steps;
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    if (steps.front() < 1 || steps.back() > config.steps) {
      throw InputError("record steps must lie in [1, steps]");
    }
    return steps;
  }
  if (config.record_stride < 1) throw InputError("record stride must be >= 1");
  std::vector<long> steps;
  for (long s = config.record_stride; s <= config.steps; s += config.record_stride) steps.push_back(s);
  if (steps.empty() || steps.back() != config.steps) steps.push_back(config.steps);
  return steps;
}

void checkConfig(const PolymerConfig& config) {
  if (config.degree < 0) throw InputError("degree must be >= 0");
  if (config.dim < 1) throw InputError("dimension must be >= 1");
  if (config.noise_sigma < 0) throw InputError("noise sigma must be >= 0");
  if (config.learning_rate <= 0) throw InputError("learning rate must be > 0");
  if (config.steps < 1) throw InputError("steps must be >= 1");
  if (config.repetitions < 1) throw InputError("repetitions must be >= 1");
  if (config.weight_decay < 0) throw InputError("weight decay must be >= 0");
}

}  // namespace

ChainObservables chainMetrics(const Matrix& control, const bezier::QuadratureConfig& quad,
                              const Vector* com_reference) {
  ChainObservables obs;
  const Index k1 = control.rows();
  Vector com = control.colwise().mean();
  if (com_reference) com -= *com_reference;
  obs.com = com.norm();
  obs.re = (control.row(k1 - 1) - control.row(0)).norm();
  const Matrix centered = control.rowwise() - control.colwise().mean();
  obs.rg = std::sqrt(centered.rowwise().squaredNorm().mean());
  obs.lambda_k = 0.0;
  for (Index k = 0; k + 1 < k1; ++k) {
    obs.lambda_k += (control.row(k + 1) - control.row(k)).norm();
  }
  obs.s = k1 > 1 ? bezier::arcLength(control, 0.0, 1.0, quad) : 0.0;
  return obs;
}

PolymerTrace simulate(const PolymerConfig& config) {
  checkConfig(config);
  const std::vector<long> records = recordSteps(config);
  const Index n_records = static_cast<Index>(records.size());
  const int reps = config.repetitions;
  const Index k1 = config.degree + 1;

  // per-repetition observable table, reduced after the parallel loop
  std::vector<Matrix> per_rep(static_cast<std::size_t>(reps));

  parallelFor(reps, [&](Index rep) {
    RngEngine rng = makeStream(config.seed, static_cast<std::uint64_t>(rep));
    Matrix control = Matrix::Zero(k1, config.dim);
    const Vector com0 = Vector::Zero(config.dim);
    Matrix table(n_records, kColumns);
    Index next_record = 0;
    const double eta = config.learning_rate;
    for (long step = 1; step <= config.steps; ++step) {
      const double t_star = uniform01(rng);
      const Vector eps = config.noise_sigma * normalVector(rng, config.dim);
      const Vector weights = bezier::bernsteinWeights(config.degree, t_star);
      for (Index k = 0; k < k1; ++k) {
        const Vector scaled = weights[k] * eps;
        control.row(k) += eta * scaled.transpose();
      }
      if (config.weight_decay > 0.0) {
        for (Index k = 0; k < k1; ++k) {
          control.row(k) -= (eta * config.weight_decay) * control.row(k);
        }
      }
      if (next_record < n_records && records[static_cast<std::size_t>(next_record)] == step) {
        const ChainObservables obs = chainMetrics(control, config.quadrature, &com0);
        table.row(next_record) << obs.com, obs.re, obs.rg, obs.lambda_k, obs.s;
        ++next_record;
      }
    }
    per_rep[static_cast<std::size_t>(rep)] = std::move(table);
  });

  PolymerTrace trace;
  trace.steps = records;
  trace.repetitions = reps;
  trace.eff_time.resize(records.size());
  const double unit = config.learning_rate * config.learning_rate * config.noise_sigma * config.noise_sigma;
  for (std::size_t i = 0; i < records.size(); ++i) {
    trace.eff_time[i] = static_cast<double>(records[i]) * unit;
  }
  trace.mean = Matrix::Zero(n_records, kColumns);
  trace.se = Matrix::Zero(n_records, kColumns);
  trace.mean_sq = Matrix::Zero(n_records, kColumns);
  trace.se_sq = Matrix::Zero(n_records, kColumns);
  for (const auto& table : per_rep) {
    trace.mean += table;
    trace.mean_sq += table.cwiseAbs2();
  }
  trace.mean /= static_cast<double>(reps);
  trace.mean_sq /= static_cast<double>(reps);
  if (reps > 1) {
    for (const auto& table : per_rep) {
      trace.se += (table - trace.mean).cwiseAbs2();
      trace.se_sq += (table.cwiseAbs2() - trace.mean_sq).cwiseAbs2();
    }
    const double denom = static_cast<double>(reps - 1);
    const double root_reps = std::sqrt(static_cast<double>(reps));
    trace.se = (trace.se / denom).cwiseSqrt() / root_reps;
    trace.se_sq = (trace.se_sq / denom).cwiseSqrt() / root_reps;
  }
  return trace;
}

double analyticCom(double n, double eta, double sigma, double dim, double degree) {
  return std::sqrt(n * eta * eta * sigma * sigma) * std::sqrt(dim) / (degree + 1.0);
}

double endToEndIntegral(int degree) {
  if (degree < 1) throw InputError("end-to-end integral needs degree >= 1");
  const double k = static_cast<double>(degree);
  const double log_term = 2.0 * std::lgamma(k + 1.0) - std::lgamma(2.0 * k + 2.0);
  return 2.0 / (2.0 * k + 1.0) - 2.0 * std::exp(log_term);
}

double analyticRe2(double n, double eta, double sigma, double dim, int degree) {
  return eta * eta * sigma * sigma * n * dim * endToEndIntegral(degree);
}

ScalingFit fitPowerLaw(const std::vector<double>& x, const std::vector<double>& values) {
  if (x.size() != values.size()) throw InputError("power-law fit needs matching lengths");
  if (x.size() < 10) throw InputError("power-law fit needs at least 10 points");
  const auto n = static_cast<Index>(x.size());
  Vector lx(n), ly(n);
  for (Index i = 0; i < n; ++i) {
    if (!(x[static_cast<std::size_t>(i)] > 0.0) || !(values[static_cast<std::size_t>(i)] > 0.0)) {
      throw InputError("power-law fit requires strictly positive values");
    }
    lx[i] = std::log(x[static_cast<std::size_t>(i)]);
    ly[i] = std::log(values[static_cast<std::size_t>(i)]);
  }
  const double mx = lx.mean();
  const double my = ly.mean();
  const double sxx = (lx.array() - mx).square().sum();
  if (sxx <= 0.0) throw InputError("power-law fit needs spread in x");
  const double sxy = ((lx.array() - mx) * (ly.array() - my)).sum();
  ScalingFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    rss += r * r;
  }
  fit.slope_se = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
  return fit;
}

ScalingFit fitScaling(const PolymerTrace& trace, Observable what, double min_eff, double max_eff) {
  std::vector<double> x, v;
  const int col = static_cast<int>(what);
  for (std::size_t i = 0; i < trace.eff_time.size(); ++i) {
    if (trace.eff_time[i] >= min_eff && trace.eff_time[i] <= max_eff) {
      x.push_back(trace.eff_time[i]);
      v.push_back(trace.mean(static_cast<Index>(i), col));
    }
  }
  return fitPowerLaw(x, v);
}

}  // namespace losstunnel::polymer
