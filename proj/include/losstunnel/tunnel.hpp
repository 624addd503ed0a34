#ifndef LOSSTUNNEL_TUNNEL_HPP
#define LOSSTUNNEL_TUNNEL_HPP

#include <vector>

#include "losstunnel/bezier.hpp"
#include "losstunnel/types.hpp"

namespace losstunnel::tunnel {

/// Orthonormal basis of the hyperplane spanned by the centered control
/// points. `projection` is D x r with r = effective_rank; r < K happens for
/// degenerate (e.g. collinear) control points and is reported, not fatal.
struct SubspaceBasis {
  Vector mean;
  Matrix projection;
  Index effective_rank = 0;
  Vector singular_values;
  bool rank_deficient = false;
};

SubspaceBasis buildBasis(const Matrix& control);

/// Local orthonormal system at one curve position, expressed in subspace
/// coordinates (dimension r): unit tangent plus r-1 normals. `completed` is
/// set when numerically dependent curve derivatives forced a seeded random
/// completion of the basis.
struct Frame {
  double t_ref = 0.0;
  Vector tangent;
  Matrix normals;  // r x (r-1), orthonormal, orthogonal to tangent
  bool completed = false;
};

/// Frame from the curve derivatives at t, orthogonalized in order
/// c'(t), c''(t), ... (Gram-Schmidt). Throws if the tangent vanishes.
Frame frenetFrame(const Matrix& control, const SubspaceBasis& basis, double t = 0.0);

/// Reference frames for rotation-minimizing frame queries: a new reference is
/// stored whenever the tangent has rotated past `angle_threshold` since the
/// previous one, which is where normal sign flips could otherwise occur.
struct FrameTable {
  int resolution = 1000;
  double angle_threshold = 0.0;  // radians
  std::vector<Frame> references;
};

FrameTable buildFrameTable(const Matrix& control, const SubspaceBasis& basis,
                           int resolution = 1000, double threshold_deg = 45.0);

/// Frame at t propagated from the nearest stored reference at or before t:
/// Gram-Schmidt of [tangent(t), stored normals], which keeps every normal
/// positively aligned with its reference.
Frame frameAt(const FrameTable& table, const Matrix& control, const SubspaceBasis& basis, double t);

/// Same, but pinned to a specific reference entry (used for in-segment
/// derivatives that must not straddle a reference switch).
Frame frameAtWithReference(const FrameTable& table, const Matrix& control,
                           const SubspaceBasis& basis, std::size_t ref_index, double t);

enum class Parameterization { kTime, kArcLength };

/// Sampler-facing coordinate: position along the curve (time t or arc s) plus
/// the cross-section offsets xi (length r-1).
struct TunnelCoordinate {
  Parameterization parameterization = Parameterization::kTime;
  double position = 0.0;
  Vector xi;

  static TunnelCoordinate time(double t, Vector xi = Vector());
  static TunnelCoordinate arc(double s, Vector xi = Vector());
};

/// Ambient parameter vector of a tunnel coordinate:
/// theta = mean + projection * (c(t) + sum_j xi_j normal_j(t)).
Vector lift(const FrameTable& table, const Matrix& control, const SubspaceBasis& basis,
            const TunnelCoordinate& coord);

enum class VolumeMode { kSpeedOnly, kFullJacobian };

/// Log volume element of the tunnel-to-subspace map at this coordinate.
/// kSpeedOnly: log ||c'(t)||. kFullJacobian additionally accounts for frame
/// rotation: log |  ||c'(t)|| + sum_j xi_j (normal_j'(t) . tangent(t)) |,
/// which is the exact determinant because the normal columns are orthonormal
/// and orthogonal to the tangent. Returns -inf when the argument is
/// nonpositive (coordinate beyond the local curvature radius).
double logVolumeAdjustment(const FrameTable& table, const Matrix& control,
                           const SubspaceBasis& basis, const TunnelCoordinate& coord,
                           VolumeMode mode);

/// Rotation rates beta_j = normal_j'(t) . tangent(t), by central differences
/// with step 1/resolution on frames from a single reference (one-sided at the
/// domain ends). These are the curvature couplings entering the full
/// Jacobian.
Vector normalRotationRates(const FrameTable& table, const Matrix& control,
                           const SubspaceBasis& basis, double t);

/// Plain hyperplane point mean + projection * phi (no time structure).
Vector volumeLift(const SubspaceBasis& basis, const Vector& phi);

/// Curve in subspace coordinates: c(t) = projection^T (b(t) - mean).
Vector curvePoint(const Matrix& control, const SubspaceBasis& basis, double t);
Vector curveVelocity(const Matrix& control, const SubspaceBasis& basis, double t);

}  // namespace losstunnel::tunnel

#endif
