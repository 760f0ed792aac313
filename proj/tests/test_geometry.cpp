#include <cmath>
#include <random>

#include "doctest.h"

#include "attnflow/errors.hpp"
#include "attnflow/geometry.hpp"

using namespace attnflow;

namespace {
Vec unit(std::initializer_list<double> v) {
  Vec x(v);
  const double n = norm(x);
  for (double& c : x) c /= n;
  return x;
}
}  // namespace

TEST_CASE("project_tangent removes the radial component") {
  const Vec e1{1.0, 0.0};

  SUBCASE("generic vector") {
    const Vec p = project_tangent(e1, Vec{2.0, 3.0});
    CHECK(std::abs(p[0]) <= 1e-15);
    CHECK(p[1] == doctest::Approx(3.0));
  }
  SUBCASE("radial input maps to zero") {
    const Vec p = project_tangent(e1, Vec{5.0, 0.0});
    CHECK(std::abs(p[0]) <= 1e-12);
    CHECK(std::abs(p[1]) <= 1e-12);
  }
  SUBCASE("hand-evaluated diagonal base point") {
    const Vec x = unit({1.0, 1.0});
    const Vec p = project_tangent(x, Vec{1.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(-0.5).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(project_tangent(e1, Vec{1.0, 2.0, 3.0}), std::invalid_argument);
  }
}

TEST_CASE("decompose") {
  SUBCASE("3-4-5 split") {
    const RadialTangential rt = decompose(Vec{1.0, 0.0}, Vec{3.0, 4.0});
    CHECK(rt.radial == doctest::Approx(3.0));
    CHECK(rt.tangential_norm == doctest::Approx(4.0));
    CHECK(rt.alignment_fraction == doctest::Approx(0.6));
  }
  SUBCASE("degenerate aggregation is all zeros") {
    const RadialTangential rt = decompose(Vec{1.0, 0.0}, Vec{0.0, 0.0});
    CHECK(rt.radial == 0.0);
    CHECK(rt.tangential_norm == 0.0);
    CHECK(rt.alignment_fraction == 0.0);
  }
  SUBCASE("orthogonal-token aggregation profile") {
    // f = alpha * (e^{alpha beta}, 1, ..., 1) against x = e1 gives
    // alignment e^{ab} / sqrt(e^{2ab} + n - 1).
    const int n = 8;
    const double alpha = 1.0, beta = 1.0;
    Vec x(n, 0.0);
    x[0] = 1.0;
    Vec f(n, alpha);
    f[0] = alpha * std::exp(alpha * beta);
    const RadialTangential rt = decompose(x, f);
    const double expect = std::exp(alpha * beta) /
                          std::sqrt(std::exp(2.0 * alpha * beta) + n - 1);
    CHECK(rt.alignment_fraction == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("renormalize") {
  SUBCASE("scales to unit length") {
    const UnitVector u = renormalize(Vec{3.0, 4.0});
    CHECK(u.coords()[0] == doctest::Approx(0.6));
    CHECK(u.coords()[1] == doctest::Approx(0.8));
  }
  SUBCASE("idempotent on unit vectors") {
    const Vec x = unit({0.3, -0.2, 0.9});
    const UnitVector u = renormalize(x);
    for (int k = 0; k < 3; ++k) CHECK(u.coords()[k] == doctest::Approx(x[k]).epsilon(1e-15));
  }
  SUBCASE("zero vector is degenerate") {
    CHECK_THROWS_AS(renormalize(Vec{0.0, 0.0, 0.0}), DegenerateStateError);
  }
}

TEST_CASE("projection identities on random data") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 40);
    Vec x(d), u(d), w(d);
    for (double& c : x) c = gauss(rng);
    const double nx = norm(x);
    for (double& c : x) c /= nx;
    for (double& c : u) c = gauss(rng);
    for (double& c : w) c = gauss(rng);

    const Vec pu = project_tangent(x, u);
    // self-pairing
    CHECK(std::abs(dot(pu, u) - dot(pu, pu)) <= 1e-12);
    // symmetry
    CHECK(std::abs(dot(pu, w) - dot(u, project_tangent(x, w))) <= 1e-12);
    // orthogonality to the base point
    CHECK(std::abs(dot(pu, x)) <= 1e-12);
    // Pythagoras
    const RadialTangential rt = decompose(x, u);
    CHECK(std::abs(rt.radial * rt.radial + rt.tangential_norm * rt.tangential_norm -
                   dot(u, u)) <= 1e-10);
  }
}

TEST_CASE("UnitVector validates its invariant") {
  CHECK_THROWS_AS(UnitVector(Vec{1.0, 1.0}), std::invalid_argument);
  CHECK_NOTHROW(UnitVector(Vec{0.0, 1.0}));
}
