#include "losstunnel/tunnel.hpp"

#include <cmath>
#include <limits>

#include "losstunnel/rng.hpp"

namespace losstunnel::tunnel {

namespace {

constexpr double kDependentTol = 1e-10;

// Orthonormalize `candidates` columns in order; returns r orthonormal columns
// where r = basis dimension. Numerically dependent candidates are replaced by
// seeded random directions orthogonalized against what exists.
Matrix gramSchmidtComplete(const Matrix& candidates, Index target_rank, bool* completed) {
  const Index dim = candidates.rows();
  Matrix q(dim, target_rank);
  Index filled = 0;
  if (completed) *completed = false;
  RngEngine rng = makeStream(0x9d2c5680ULL, 1);
  Index next_candidate = 0;
  while (filled < target_rank) {
    Vector v;
    bool from_candidates = next_candidate < candidates.cols();
    if (from_candidates) {
      v = candidates.col(next_candidate++);
    } else {
      v = normalVector(rng, dim);
      if (completed) *completed = true;
    }
    const double scale = v.norm();
    for (Index j = 0; j < filled; ++j) v -= q.col(j).dot(v) * q.col(j);
    // second pass stabilizes near-dependent vectors
    for (Index j = 0; j < filled; ++j) v -= q.col(j).dot(v) * q.col(j);
    const double resid = v.norm();
    if (resid <= kDependentTol * std::max(1.0, scale)) {
      // dependent candidate (or unlucky random draw): skip; random fill takes
      // over once the candidates are exhausted
      if (from_candidates && completed) *completed = true;
      continue;
    }
    q.col(filled++) = v / resid;
  }
  return q;
}

}  // namespace

SubspaceBasis buildBasis(const Matrix& control) {
  if (control.rows() < 2) throw InputError("basis needs at least two control points");
  if (!control.allFinite()) throw InputError("control points must be finite");
  const Index degree = control.rows() - 1;

  SubspaceBasis basis;
  basis.mean = control.colwise().mean();
  const Matrix centered = control.rowwise() - basis.mean.transpose();

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double scale = sv.size() > 0 ? sv[0] : 0.0;
  const double point_scale = 1.0 + basis.mean.norm();
  if (scale <= 1e-13 * point_scale) {
    throw InputError("degenerate basis: all control points coincide");
  }
  Index rank = 0;
  for (Index i = 0; i < sv.size() && i < degree; ++i) {
    if (sv[i] > 1e-10 * scale) ++rank;
  }
  basis.effective_rank = rank;
  basis.projection = svd.matrixV().leftCols(rank);
  basis.singular_values = sv.head(std::min<Index>(sv.size(), degree));
  basis.rank_deficient = rank < degree;
  return basis;
}

Frame frenetFrame(const Matrix& control, const SubspaceBasis& basis, double t) {
  const Index r = basis.effective_rank;
  Matrix derivs(r, r);
  for (Index j = 0; j < r; ++j) {
    derivs.col(j) = basis.projection.transpose() * bezier::derivative(control, t, static_cast<int>(j) + 1);
  }
  const double tangent_norm = derivs.col(0).norm();
  if (tangent_norm <= 1e-14) {
    throw InputError("frame undefined: curve tangent vanishes at t");
  }
  Frame frame;
  frame.t_ref = t;
  const Matrix q = gramSchmidtComplete(derivs, r, &frame.completed);
  frame.tangent = q.col(0);
  frame.normals = q.rightCols(r - 1);
  return frame;
}

FrameTable buildFrameTable(const Matrix& control, const SubspaceBasis& basis, int resolution,
                           double threshold_deg) {
  if (resolution < 2) throw InputError("frame table resolution must be >= 2");
  if (!(threshold_deg > 0.0 && threshold_deg < 90.0)) {
    throw InputError("angle threshold must lie in (0, 90) degrees");
  }
  FrameTable table;
  table.resolution = resolution;
  table.angle_threshold = threshold_deg * M_PI / 180.0;
  table.references.push_back(frenetFrame(control, basis, 0.0));

  for (int i = 1; i <= resolution; ++i) {
    const double t = static_cast<double>(i) / resolution;
    Vector tangent = curveVelocity(control, basis, t);
    const double norm = tangent.norm();
    if (norm <= 1e-14) {
      throw InputError("frame table failed: tangent vanishes at t = " + std::to_string(t));
    }
    tangent /= norm;
    const Frame& ref = table.references.back();
    const double cosang = std::clamp(tangent.dot(ref.tangent), -1.0, 1.0);
    if (std::acos(cosang) > table.angle_threshold) {
      Matrix candidates(basis.effective_rank, basis.effective_rank);
      candidates.col(0) = tangent;
      candidates.rightCols(basis.effective_rank - 1) = ref.normals;
      Frame next;
      next.t_ref = t;
      const Matrix q = gramSchmidtComplete(candidates, basis.effective_rank, &next.completed);
      next.tangent = q.col(0);
      next.normals = q.rightCols(basis.effective_rank - 1);
      table.references.push_back(std::move(next));
    }
  }
  return table;
}

Frame frameAtWithReference(const FrameTable& table, const Matrix& control,
                           const SubspaceBasis& basis, std::size_t ref_index, double t) {
  if (ref_index >= table.references.size()) throw InputError("reference index out of range");
  const Frame& ref = table.references[ref_index];
  Vector tangent = curveVelocity(control, basis, t);
  const double norm = tangent.norm();
  if (norm <= 1e-14) throw InputError("frame undefined: curve tangent vanishes at t");
  tangent /= norm;

  const Index r = basis.effective_rank;
  Matrix candidates(r, r);
  candidates.col(0) = tangent;
  candidates.rightCols(r - 1) = ref.normals;
  Frame frame;
  frame.t_ref = t;
  const Matrix q = gramSchmidtComplete(candidates, r, &frame.completed);
  frame.tangent = q.col(0);
  frame.normals = q.rightCols(r - 1);
  return frame;
}

Frame frameAt(const FrameTable& table, const Matrix& control, const SubspaceBasis& basis, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("curve parameter t must lie in [0,1]");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < table.references.size(); ++i) {
    if (table.references[i].t_ref <= t) idx = i;
  }
  return frameAtWithReference(table, control, basis, idx, t);
}

TunnelCoordinate TunnelCoordinate::time(double t, Vector xi) {
  TunnelCoordinate c;
  c.parameterization = Parameterization::kTime;
  c.position = t;
  c.xi = std::move(xi);
  return c;
}

TunnelCoordinate TunnelCoordinate::arc(double s, Vector xi) {
  TunnelCoordinate c;
  c.parameterization = Parameterization::kArcLength;
  c.position = s;
  c.xi = std::move(xi);
  return c;
}

namespace {

double resolveTime(const Matrix& control, const TunnelCoordinate& coord) {
  if (coord.parameterization == Parameterization::kTime) {
    if (!(coord.position >= 0.0 && coord.position <= 1.0)) {
      throw InputError("tunnel time coordinate outside [0,1]");
    }
    return coord.position;
  }
  return bezier::arcToTime(control, coord.position);
}

}  // namespace

Vector lift(const FrameTable& table, const Matrix& control, const SubspaceBasis& basis,
            const TunnelCoordinate& coord) {
  const double t = resolveTime(control, coord);
  const Index r = basis.effective_rank;
  if (coord.xi.size() != r - 1) throw InputError("xi length must equal effective rank - 1");
  Vector g = curvePoint(control, basis, t);
  if (coord.xi.size() > 0) {
    const Frame frame = frameAt(table, control, basis, t);
    g += frame.normals * coord.xi;
  }
  return basis.mean + basis.projection * g;
}

Vector normalRotationRates(const FrameTable& table, const Matrix& control,
                           const SubspaceBasis& basis, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("curve parameter t must lie in [0,1]");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < table.references.size(); ++i) {
    if (table.references[i].t_ref <= t) idx = i;
  }
  const double h = 1.0 / table.resolution;
  const double lo = std::max(0.0, t - h);
  const double hi = std::min(1.0, t + h);
  const Frame f_lo = frameAtWithReference(table, control, basis, idx, lo);
  const Frame f_hi = frameAtWithReference(table, control, basis, idx, hi);
  const Frame f_mid = frameAtWithReference(table, control, basis, idx, t);
  Vector rates(basis.effective_rank - 1);
  for (Index j = 0; j < rates.size(); ++j) {
    const Vector dnormal = (f_hi.normals.col(j) - f_lo.normals.col(j)) / (hi - lo);
    rates[j] = dnormal.dot(f_mid.tangent);
  }
  return rates;
}

double logVolumeAdjustment(const FrameTable& table, const Matrix& control,
                           const SubspaceBasis& basis, const TunnelCoordinate& coord,
                           VolumeMode mode) {
  const double t = resolveTime(control, coord);
  const double speed = curveVelocity(control, basis, t).norm();
  if (mode == VolumeMode::kSpeedOnly) {
    return speed > 0.0 ? std::log(speed) : -std::numeric_limits<double>::infinity();
  }

  if (coord.xi.size() != basis.effective_rank - 1) {
    throw InputError("xi length must equal effective rank - 1");
  }
  const Vector rates = normalRotationRates(table, control, basis, t);
  const double det = speed + coord.xi.dot(rates);
  if (det <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(det);
}

Vector volumeLift(const SubspaceBasis& basis, const Vector& phi) {
  if (phi.size() != basis.effective_rank) throw InputError("phi length must equal effective rank");
  return basis.mean + basis.projection * phi;
}

Vector curvePoint(const Matrix& control, const SubspaceBasis& basis, double t) {
  return basis.projection.transpose() * (bezier::evaluate(control, t) - basis.mean);
}

Vector curveVelocity(const Matrix& control, const SubspaceBasis& basis, double t) {
  return basis.projection.transpose() * bezier::derivative(control, t, 1);
}

}  // namespace losstunnel::tunnel
