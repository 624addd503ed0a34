#include "losstunnel/diagnostics.hpp"

#include <cmath>
#include <limits>

namespace losstunnel::diag {

double essSingleChain(const Vector& draws, bool* degenerate) {
  if (degenerate) *degenerate = false;
  const Index n = draws.size();
  if (n < 10) throw InputError("ESS needs at least 10 draws");
  const double mean = draws.mean();
  const Vector centered = draws.array() - mean;
  const double gamma0 = centered.squaredNorm() / static_cast<double>(n);
  // tolerance absorbs the rounding noise a constant chain leaves behind
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (gamma0 <= 16.0 * eps * eps * mean * mean + 1e-300) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }

  auto rho = [&](Index lag) {
    double acc = 0.0;
    for (Index i = 0; i + lag < n; ++i) acc += centered[i] * centered[i + lag];
    return acc / static_cast<double>(n) / gamma0;
  };

  double sum = 0.0;
  for (Index lag = 1; lag + 1 < n; lag += 2) {
    const double pair = rho(lag) + rho(lag + 1);
    if (pair < 0.0) break;
    sum += pair;
  }
  return static_cast<double>(n) / (1.0 + 2.0 * sum);
}

double ess(const std::vector<Vector>& chains, bool* degenerate) {
  if (chains.empty()) throw InputError("ESS needs at least one chain");
  if (degenerate) *degenerate = false;
  double total = 0.0;
  for (const auto& chain : chains) {
    bool deg = false;
    total += essSingleChain(chain, &deg);
    if (deg && degenerate) *degenerate = true;
  }
  return total;
}

double rhat(const Matrix& chains, bool* defined) {
  const Index m = chains.rows();
  const Index u = chains.cols();
  if (m < 2) throw InputError("rhat needs at least 2 chains");
  if (u < 10) throw InputError("rhat needs at least 10 draws per chain");
  if (defined) *defined = true;

  const Vector chain_means = chains.rowwise().mean();
  const double grand_mean = chain_means.mean();
  const double b = static_cast<double>(u) / static_cast<double>(m - 1) *
                   (chain_means.array() - grand_mean).square().sum();
  double w = 0.0;
  for (Index i = 0; i < m; ++i) {
    w += (chains.row(i).array() - chain_means[i]).square().sum() / static_cast<double>(u - 1);
  }
  w /= static_cast<double>(m);
  if (w <= 0.0) {
    if (defined) *defined = false;
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double var_plus = (static_cast<double>(u - 1) / u) * w + b / static_cast<double>(u);
  return std::sqrt(var_plus / w);
}

}  // namespace losstunnel::diag
