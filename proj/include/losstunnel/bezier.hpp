#ifndef LOSSTUNNEL_BEZIER_HPP
#define LOSSTUNNEL_BEZIER_HPP

#include "losstunnel/types.hpp"

namespace losstunnel::bezier {

/// Quadrature used for arc-length integrals of ‖b'(t)‖.
struct QuadratureConfig {
  enum class Rule { kCompositeSimpson, kGaussLegendre };
  Rule rule = Rule::kCompositeSimpson;
  int n_nodes = 256;  // subintervals (Simpson) or points (Gauss-Legendre), >= 8
};

/// Bernstein basis weights of the given degree at t in [0,1].
/// Weights are nonnegative and sum to one.
Vector bernsteinWeights(int degree, double t);

/// Curve point: convex combination of control-point rows. `control` is
/// (K+1) x D, one control point per row. Endpoints are interpolated exactly.
Vector evaluate(const Matrix& control, double t);

/// order-th derivative of the curve at t via the degree-reduction identity
/// (iterated forward differences of the control points). Orders above the
/// degree return the zero vector.
Vector derivative(const Matrix& control, double t, int order = 1);

/// Arc length of the curve restricted to [a, b] c [0, 1].
double arcLength(const Matrix& control, double a, double b,
                 const QuadratureConfig& quad = QuadratureConfig{});

inline double totalArcLength(const Matrix& control,
                             const QuadratureConfig& quad = QuadratureConfig{}) {
  return arcLength(control, 0.0, 1.0, quad);
}

/// Inverse of s(t) = arcLength(control, 0, t) by bisection. `tol` < 0 selects
/// the default 1e-8 * total length. The map s(t) is monotone, so bisection
/// converges unconditionally (up to quadrature accuracy).
double arcToTime(const Matrix& control, double arc,
                 const QuadratureConfig& quad = QuadratureConfig{}, double tol = -1.0);

}  // namespace losstunnel::bezier

#endif
