#include "losstunnel/bezier.hpp"

#include <cmath>
#include <vector>

namespace losstunnel::bezier {

namespace {

void checkTime(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("curve parameter t must lie in [0,1]");
}

void checkControl(const Matrix& control) {
  if (control.rows() < 1) throw InputError("control matrix needs at least one row");
  if (!control.allFinite()) throw InputError("control points must be finite");
}

// C(degree, k) via log-gamma; rounded to the nearest integer while exactly
// representable so that small binomials stay exact.
std::vector<double> binomialRow(int degree) {
  std::vector<double> row(static_cast<std::size_t>(degree) + 1);
  const double lg_n = std::lgamma(static_cast<double>(degree) + 1.0);
  for (int k = 0; k <= degree; ++k) {
    const double lc = lg_n - std::lgamma(static_cast<double>(k) + 1.0) -
                      std::lgamma(static_cast<double>(degree - k) + 1.0);
    const double v = std::exp(lc);
    row[static_cast<std::size_t>(k)] = v < 9e15 ? std::round(v) : v;
  }
  return row;
}

// Integrand speed ‖b'(t)‖ evaluated without re-validating inputs.
double speedAt(const Matrix& control, double t) {
  return derivative(control, t, 1).norm();
}

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
void gaussLegendreNodes(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[static_cast<std::size_t>(i)] = -x;
    nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[static_cast<std::size_t>(i)] = w;
    weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
}

}  // namespace

Vector bernsteinWeights(int degree, double t) {
  if (degree < 0) throw InputError("Bezier degree must be nonnegative");
  checkTime(t);
  const auto binom = binomialRow(degree);
  Vector w(degree + 1);
  for (int k = 0; k <= degree; ++k) {
    w[k] = binom[static_cast<std::size_t>(k)] * std::pow(1.0 - t, degree - k) * std::pow(t, k);
  }
  return w;
}

Vector evaluate(const Matrix& control, double t) {
  checkControl(control);
  const int degree = static_cast<int>(control.rows()) - 1;
  if (t == 0.0) return control.row(0);
  if (t == 1.0) return control.row(degree);
  const Vector w = bernsteinWeights(degree, t);
  return control.transpose() * w;
}

Vector derivative(const Matrix& control, double t, int order) {
  checkControl(control);
  checkTime(t);
  if (order < 1) throw InputError("derivative order must be >= 1");
  const int degree = static_cast<int>(control.rows()) - 1;
  if (order > degree) return Vector::Zero(control.cols());

  Matrix diff = control;
  double factor = 1.0;
  for (int j = 0; j < order; ++j) {
    Matrix next = diff.bottomRows(diff.rows() - 1) - diff.topRows(diff.rows() - 1);
    diff = std::move(next);
    factor *= static_cast<double>(degree - j);
  }
  const Vector w = bernsteinWeights(degree - order, t);
  return factor * (diff.transpose() * w);
}

double arcLength(const Matrix& control, double a, double b, const QuadratureConfig& quad) {
  checkControl(control);
  if (!(0.0 <= a && a <= b && b <= 1.0)) throw InputError("arc-length interval must satisfy 0 <= a <= b <= 1");
  if (quad.n_nodes < 8) throw InputError("quadrature needs n_nodes >= 8");
  if (a == b) return 0.0;

  if (quad.rule == QuadratureConfig::Rule::kGaussLegendre) {
    std::vector<double> nodes, weights;
    gaussLegendreNodes(quad.n_nodes, nodes, weights);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      sum += weights[i] * speedAt(control, mid + half * nodes[i]);
    }
    return half * sum;
  }

  // Composite Simpson over an even number of subintervals.
  int n = quad.n_nodes;
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  double sum = speedAt(control, a) + speedAt(control, b);
  for (int i = 1; i < n; ++i) {
    sum += (i % 2 == 1 ? 4.0 : 2.0) * speedAt(control, a + i * h);
  }
  return sum * h / 3.0;
}

double arcToTime(const Matrix& control, double arc, const QuadratureConfig& quad, double tol) {
  checkControl(control);
  const double total = arcLength(control, 0.0, 1.0, quad);
  if (tol < 0.0) tol = 1e-8 * std::max(total, 1e-300);
  if (!(arc >= -tol && arc <= total + tol)) throw InputError("arc position outside [0, total length]");
  if (total == 0.0) return 0.0;  // collapsed curve: only s = 0 is representable
  if (arc <= 0.0) return 0.0;
  if (arc >= total) return 1.0;

  double lo = 0.0, hi = 1.0;
  double s_lo = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double s_mid = s_lo + arcLength(control, lo, mid, quad);
    if (std::abs(s_mid - arc) < tol) return mid;
    if (s_mid < arc) {
      lo = mid;
      s_lo = s_mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-16) return 0.5 * (lo + hi);
  }
  return 0.5 * (lo + hi);
}

}  // namespace losstunnel::bezier
