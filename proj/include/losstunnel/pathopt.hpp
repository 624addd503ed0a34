#ifndef LOSSTUNNEL_PATHOPT_HPP
#define LOSSTUNNEL_PATHOPT_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "losstunnel/bezier.hpp"
#include "losstunnel/dataset.hpp"
#include "losstunnel/mlp.hpp"
#include "losstunnel/polymer.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::pathopt {

enum class Objective { kUniformT, kArcLengthIs };
enum class OptimizerKind { kSgd, kAdam };

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct EarlyStopSettings {
  int grid_points = 1000;  // validation grid over t
  int patience = 0;        // evaluations without improvement before stopping; 0 = run all epochs
  int eval_every = 1;      // epochs between validation evaluations
};

struct TrainConfig {
  Objective objective = Objective::kUniformT;
  int samples_per_step = 1;  // M
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AdamSettings adam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  int epochs = 1000;
  Index batch_size = 0;  // 0 or >= n: full batch
  EarlyStopSettings early_stop;
  std::uint64_t seed = 0;
  bezier::QuadratureConfig quadrature;
  bool trace_log_binning = true;  // record every epoch up to 100, then geometrically
  bool freeze_endpoints = false;
};

struct TraceRow {
  long epoch = 0;
  double loss = 0.0;
  double val_score = 0.0;
  double arc_length = 0.0;
  double re = 0.0;
  double rg = 0.0;
  double lambda_k = 0.0;
  double com = 0.0;        // displacement of the control-point mean from its start
  double grad_norm = 0.0;  // sum over control points of the dispatched gradient norms
};

struct PathTrace {
  std::vector<TraceRow> rows;
};

struct TrainResult {
  Matrix control;  // best-scoring checkpoint
  PathTrace trace;
  long best_epoch = 0;
  double best_val_score = 0.0;
  bool aborted_non_finite = false;
};

/// Optimizes the control points by stochastic path descent: per batch draw
/// t* ~ U(0,1), evaluate the loss gradient at b(t*) once, and dispatch it to
/// every control point with its Bernstein weight. Under the arc-length
/// objective each sample is additionally weighted by ||b'(t*)|| / S (treated
/// as a constant). Returns the checkpoint with the best validation path
/// score.
TrainResult trainPath(const mlp::Mlp& net, const Matrix& lambda_init, const data::Dataset& dataset,
                      const TrainConfig& config);

/// Importance weight ||b'(t)|| / S for the arc-length objective; S is the
/// total curve length under `quad`. A collapsed curve yields weight 1 and
/// sets `degenerate`.
double importanceWeight(const Matrix& control, double t, const bezier::QuadratureConfig& quad,
                        bool* degenerate = nullptr);

/// Mean per-point log-likelihood of b(t) over an evenly spaced t grid
/// (higher is better). Drives early stopping and checkpoint selection.
double pathValidationScore(const mlp::Mlp& net, const Matrix& control, const Matrix& X,
                           const Vector& y, int grid_points);

/// Loss-and-gradient source for the dynamics runner; receives the current
/// curve point and the step RNG.
using GradientSource = std::function<std::pair<double, Vector>(const Vector& theta, RngEngine& rng)>;

struct DynamicsResult {
  std::vector<polymer::ChainObservables> trace;
  Matrix control;  // final state
};

/// Runs the same dispatch/optimizer machinery as trainPath with an injected
/// gradient source and no data, recording chain geometry at the given steps.
/// Exposes the pathfinding dynamics in a flat landscape.
DynamicsResult runPathDynamics(Matrix lambda, const TrainConfig& config,
                               const GradientSource& grad_source, long steps,
                               const std::vector<long>& record_steps);

}  // namespace losstunnel::pathopt

#endif
