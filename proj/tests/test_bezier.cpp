#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "losstunnel/bezier.hpp"
#include "losstunnel/rng.hpp"

using namespace losstunnel;
namespace bz = losstunnel::bezier;

namespace {

Matrix randomControl(int degree, Index dim, std::uint64_t seed) {
  RngEngine rng = makeStream(seed, 0);
  Matrix control(degree + 1, dim);
  for (Index i = 0; i < control.rows(); ++i) {
    control.row(i) = normalVector(rng, dim).transpose();
  }
  return control;
}

}  // namespace

TEST_CASE("bernstein weights: endpoints and midpoint") {
  const Vector w0 = bz::bernsteinWeights(2, 0.0);
  CHECK(w0[0] == 1.0);
  CHECK(w0[1] == 0.0);
  CHECK(w0[2] == 0.0);

  const Vector wh = bz::bernsteinWeights(2, 0.5);
  CHECK(wh[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(wh[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(wh[2] == doctest::Approx(0.25).epsilon(1e-14));

  CHECK_THROWS_AS(bz::bernsteinWeights(2, -0.1), InputError);
  CHECK_THROWS_AS(bz::bernsteinWeights(2, 1.1), InputError);
}

TEST_CASE("bernstein weights: partition of unity and nonnegativity") {
  for (int degree : {0, 1, 2, 5, 17, 64}) {
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      const Vector w = bz::bernsteinWeights(degree, t);
      CHECK(w.minCoeff() >= 0.0);
      CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("evaluate: endpoint interpolation is bit-exact") {
  const Matrix control = randomControl(4, 7, 11);
  const Vector at0 = bz::evaluate(control, 0.0);
  const Vector at1 = bz::evaluate(control, 1.0);
  for (Index j = 0; j < control.cols(); ++j) {
    CHECK(at0[j] == control(0, j));
    CHECK(at1[j] == control(4, j));
  }
}

TEST_CASE("evaluate: 1-D quadratic midpoint") {
  Matrix control(3, 1);
  control << 0.0, 1.0, 0.0;
  CHECK(bz::evaluate(control, 0.5)[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("evaluate: collapsed curve is constant") {
  Matrix control(4, 3);
  const Vector point = (Vector(3) << 1.5, -2.0, 0.25).finished();
  for (Index i = 0; i < 4; ++i) control.row(i) = point.transpose();
  for (double t : {0.0, 0.1, 0.37, 0.99, 1.0}) {
    CHECK((bz::evaluate(control, t) - point).norm() < 1e-14);
  }
}

TEST_CASE("evaluate: affine invariance and convex hull") {
  const Matrix control = randomControl(5, 4, 3);
  const Vector shift = (Vector(4) << 2.0, -1.0, 0.5, 3.0).finished();
  const Matrix shifted = control.rowwise() + shift.transpose();
  for (int i = 0; i <= 20; ++i) {
    const double t = i / 20.0;
    const Vector a = bz::evaluate(control, t);
    CHECK((bz::evaluate(shifted, t) - (a + shift)).norm() < 1e-12);
    for (Index j = 0; j < control.cols(); ++j) {
      CHECK(a[j] >= control.col(j).minCoeff() - 1e-12);
      CHECK(a[j] <= control.col(j).maxCoeff() + 1e-12);
    }
  }
}

TEST_CASE("derivative: analytic quadratic and straight line") {
  Matrix quad(3, 1);
  quad << 0.0, 1.0, 0.0;
  // b(t) = 2t(1-t), b'(t) = 2(1-2t)
  CHECK(bz::derivative(quad, 0.0)[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(bz::derivative(quad, 0.25)[0] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(bz::derivative(quad, 0.5)[0] == doctest::Approx(0.0).epsilon(1e-13));

  Matrix line(2, 2);
  line << 0.0, 0.0, 3.0, -1.0;
  for (double t : {0.0, 0.3, 1.0}) {
    const Vector d = bz::derivative(line, t);
    CHECK(d[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(d[1] == doctest::Approx(-1.0).epsilon(1e-14));
  }
}

TEST_CASE("derivative: matches central finite differences of evaluate") {
  const Matrix control = randomControl(6, 5, 21);
  RngEngine rng = makeStream(22, 0);
  const double h = 1e-6;
  for (int i = 0; i < 10; ++i) {
    const double t = 0.01 + 0.98 * uniform01(rng);
    const Vector fd = (bz::evaluate(control, t + h) - bz::evaluate(control, t - h)) / (2.0 * h);
    const Vector an = bz::derivative(control, t);
    CHECK((fd - an).norm() / an.norm() < 1e-7);
  }
}

TEST_CASE("derivative: orders above the degree are zero, bad orders throw") {
  const Matrix control = randomControl(3, 2, 5);
  CHECK(bz::derivative(control, 0.4, 4).norm() == 0.0);
  CHECK(bz::derivative(control, 0.4, 9).norm() == 0.0);
  CHECK_THROWS_AS(bz::derivative(control, 0.4, 0), InputError);
}

TEST_CASE("derivative: second order matches finite differences of the first") {
  const Matrix control = randomControl(5, 3, 33);
  const double h = 1e-6;
  for (double t : {0.2, 0.5, 0.8}) {
    const Vector fd = (bz::derivative(control, t + h) - bz::derivative(control, t - h)) / (2.0 * h);
    const Vector an = bz::derivative(control, t, 2);
    CHECK((fd - an).norm() / an.norm() < 1e-6);
  }
}

TEST_CASE("arc length: straight segment and symmetric quadratic") {
  Matrix line(2, 1);
  line << 0.0, 1.0;
  CHECK(bz::arcLength(line, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

  // b'(t) = 2(1-2t); integral of |b'| over [0,1] is 1
  Matrix quad(3, 1);
  quad << 0.0, 1.0, 0.0;
  CHECK(bz::arcLength(quad, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("arc length: degenerate curve, chord bound, monotonicity") {
  Matrix flat(3, 2);
  flat.setOnes();
  CHECK(bz::arcLength(flat, 0.0, 1.0) == 0.0);

  const Matrix control = randomControl(4, 6, 44);
  double prev = 0.0;
  for (int i = 1; i <= 10; ++i) {
    const double b = i / 10.0;
    const double s = bz::arcLength(control, 0.0, b);
    const double chord = (bz::evaluate(control, b) - bz::evaluate(control, 0.0)).norm();
    CHECK(s >= chord - 1e-10);
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("arc length: node-doubling convergence and rule agreement") {
  // gentle curve: a dominant drift keeps the speed bounded away from zero, so
  // the integrand stays smooth and both rules converge fast
  Matrix control(5, 3);
  control << 0.0, 0.0, 0.0,  //
      1.0, 0.3, -0.1,        //
      2.0, -0.2, 0.2,        //
      3.0, 0.25, 0.1,        //
      4.0, 0.0, -0.2;
  bz::QuadratureConfig q1{bz::QuadratureConfig::Rule::kCompositeSimpson, 256};
  bz::QuadratureConfig q2{bz::QuadratureConfig::Rule::kCompositeSimpson, 512};
  const double s1 = bz::arcLength(control, 0.0, 1.0, q1);
  const double s2 = bz::arcLength(control, 0.0, 1.0, q2);
  CHECK(std::abs(s1 - s2) < 1e-8);

  bz::QuadratureConfig gl{bz::QuadratureConfig::Rule::kGaussLegendre, 64};
  CHECK(bz::arcLength(control, 0.0, 1.0, gl) == doctest::Approx(s2).epsilon(1e-10));

  // straight segments are exact under both rules
  Matrix line(2, 1);
  line << 0.0, 3.0;
  CHECK(bz::arcLength(line, 0.0, 1.0, gl) == doctest::Approx(3.0).epsilon(1e-13));
}

TEST_CASE("arc to time: boundaries and the constant-speed segment") {
  Matrix line(2, 3);
  line << 0.0, 0.0, 0.0, 2.0, 1.0, -2.0;
  const double total = bz::arcLength(line, 0.0, 1.0);
  CHECK(bz::arcToTime(line, 0.0) == 0.0);
  CHECK(bz::arcToTime(line, total) == 1.0);
  CHECK(bz::arcToTime(line, total / 2.0) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK_THROWS_AS(bz::arcToTime(line, -0.5), InputError);
  CHECK_THROWS_AS(bz::arcToTime(line, total + 0.5), InputError);
}

TEST_CASE("arc to time: round trip over random arcs") {
  const Matrix control = randomControl(5, 4, 66);
  const double total = bz::arcLength(control, 0.0, 1.0);
  RngEngine rng = makeStream(67, 0);
  for (int i = 0; i < 100; ++i) {
    const double s = total * uniform01(rng);
    const double t = bz::arcToTime(control, s);
    CHECK(std::abs(bz::arcLength(control, 0.0, t) - s) < 1e-8 * total * 1.01);
  }
}
