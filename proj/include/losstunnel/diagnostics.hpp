#ifndef LOSSTUNNEL_DIAGNOSTICS_HPP
#define LOSSTUNNEL_DIAGNOSTICS_HPP

#include <vector>

#include "losstunnel/types.hpp"

namespace losstunnel::diag {

/// Effective sample size of one chain: U / (1 + 2 * sum of autocorrelations),
/// truncated at the first odd lag whose paired autocorrelation sum
/// (rho_{2k-1} + rho_{2k}) turns negative. A zero-variance chain reports an
/// ESS of 0 and sets `degenerate`.
double essSingleChain(const Vector& draws, bool* degenerate = nullptr);

/// Multi-chain ESS: per-chain estimates combined by summation.
double ess(const std::vector<Vector>& chains, bool* degenerate = nullptr);

/// Potential scale reduction from M chains of U draws each (rows: chains).
/// B = U/(M-1) sum_m (mean_m - mean)^2, W = mean within-chain variance,
/// var+ = (U-1)/U W + B/U, rhat = sqrt(var+/W). Undefined (NaN, flag unset)
/// when W = 0.
double rhat(const Matrix& chains, bool* defined = nullptr);

}  // namespace losstunnel::diag

#endif
