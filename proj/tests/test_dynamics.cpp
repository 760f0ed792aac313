#include <cmath>

#include "doctest.h"

#include "attnflow/dynamics.hpp"
#include "attnflow/errors.hpp"
#include "attnflow/thresholds.hpp"
#include "support.hpp"

using namespace attnflow;
using namespace testsupport;

TEST_CASE("fixed points of the sphere flow") {
  SUBCASE("clustered tokens do not move") {
    std::vector<Vec> toks(6, Vec{1.0, 0.0, 0.0});
    const TokenConfiguration cfg = TokenConfiguration::from_unit_tokens(toks, 1.0);
    std::vector<HeadSpec> heads{HeadSpec::scalar(3, 1.0)};
    const TokenConfiguration next = step(cfg, heads, DynamicsKind::sphere, 1e-2);
    for (size_t k = 0; k < cfg.flat().size(); ++k)
      CHECK(std::abs(next.flat()[k] - cfg.flat()[k]) <= 1e-14);
  }
  SUBCASE("antipodal pair is an (unstable) equilibrium") {
    std::vector<Vec> toks{{1.0, 0.0}, {-1.0, 0.0}};
    const TokenConfiguration cfg = TokenConfiguration::from_unit_tokens(toks, 1.0);
    std::vector<HeadSpec> heads{HeadSpec::scalar(2, 0.9)};
    const TokenConfiguration next = step(cfg, heads, DynamicsKind::sphere, 1e-2);
    for (size_t k = 0; k < cfg.flat().size(); ++k)
      CHECK(std::abs(next.flat()[k] - cfg.flat()[k]) <= 1e-14);
  }
}

TEST_CASE("one step matches two half-steps to fifth order") {
  const TokenConfiguration cfg = random_configuration(8, 20, 3);
  const std::vector<HeadSpec> heads = random_symmetric_heads(3, 20, 2);
  auto richardson_gap = [&](double dt) {
    const TokenConfiguration one = step(cfg, heads, DynamicsKind::sphere, dt);
    const TokenConfiguration two =
        step(step(cfg, heads, DynamicsKind::sphere, dt / 2), heads, DynamicsKind::sphere,
             dt / 2);
    double m = 0.0;
    for (size_t k = 0; k < one.flat().size(); ++k)
      m = std::max(m, std::abs(one.flat()[k] - two.flat()[k]));
    return m;
  };
  const double d1 = richardson_gap(0.02);
  const double d2 = richardson_gap(0.01);
  CHECK(std::log2(d1 / d2) >= 4.5);  // fifth-order local error
}

TEST_CASE("integrator order on the mean alignment") {
  const TokenConfiguration cfg = equiangular_configuration(8, 8, 0.3);
  std::vector<HeadSpec> heads{HeadSpec::scalar(8, 1.0)};
  auto gamma_at = [&](double dt) {
    TokenConfiguration cur = cfg;
    const long steps = std::lround(1.0 / dt);
    for (long s = 0; s < steps; ++s) cur = step(cur, heads, DynamicsKind::sphere, dt);
    return cur.mean_alignment();
  };
  const double ref = gamma_at(0.02 / 16.0);
  const double e1 = std::abs(gamma_at(0.02) - ref);
  const double e2 = std::abs(gamma_at(0.01) - ref);
  CHECK(e1 / e2 >= std::pow(2.0, 3.9));
}

TEST_CASE("integrate records a monotone Lyapunov trajectory") {
  const TokenConfiguration cfg = equiangular_configuration(8, 20, 0.05);
  std::vector<HeadSpec> heads{HeadSpec::scalar(20, 1.0)};
  IntegrateOptions opt;
  opt.dt = 1e-3;
  opt.t_end = 4.0;
  opt.sample_every = 10;
  const TrajectoryRecord rec = integrate(cfg, heads, DynamicsKind::sphere, opt);

  REQUIRE(rec.times.size() >= 2);
  for (size_t k = 1; k < rec.times.size(); ++k) {
    CHECK(rec.times[k] > rec.times[k - 1]);
    CHECK(rec.mean_alignment[k] >= rec.mean_alignment[k - 1] - 1e-12);
    CHECK(rec.energies[k].total >= rec.energies[k - 1].total - 1e-10);
  }
  CHECK(rec.mean_alignment.back() > 0.99);
  CHECK(rec.final_configuration->max_unit_norm_error() <= 1e-12);

  // Series align one-to-one.
  CHECK(rec.energies.size() == rec.times.size());
  CHECK(rec.entropies.size() == rec.times.size());
  CHECK(rec.min_tau_margin.size() == rec.times.size());
}

TEST_CASE("equiangular structure is preserved by the flow") {
  const TokenConfiguration cfg = equiangular_configuration(8, 12, 0.1);
  std::vector<HeadSpec> heads{HeadSpec::scalar(12, 0.7), HeadSpec::scalar(12, 1.3)};
  IntegrateOptions opt;
  opt.dt = 1e-3;
  opt.t_end = 2.0;
  opt.sample_every = 50;
  opt.record_pairwise = true;
  const TrajectoryRecord rec = integrate(cfg, heads, DynamicsKind::sphere, opt);
  for (const auto& gram : rec.pairwise) {
    double lo = 2.0, hi = -2.0;
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j) {
        lo = std::min(lo, gram[size_t(i) * 8 + j]);
        hi = std::max(hi, gram[size_t(i) * 8 + j]);
      }
    CHECK(hi - lo <= 1e-8);
  }
}

TEST_CASE("radial dominance tracking and t_crit") {
  const double beta_star = critical_beta(1.0, 2, 8);

  SUBCASE("above the critical temperature the condition fails from the start") {
    const TokenConfiguration cfg = equiangular_configuration(8, 8, 0.0, beta_star * 1.1);
    std::vector<HeadSpec> heads{HeadSpec::scalar(8, 1.0), HeadSpec::scalar(8, 1.0)};
    IntegrateOptions opt;
    opt.dt = 1e-3;
    opt.t_end = 0.05;
    opt.sample_every = 10;
    const TrajectoryRecord rec = integrate(cfg, heads, DynamicsKind::sphere, opt);
    CHECK_FALSE(rec.condition_tau_ok.front());
    CHECK_FALSE(rec.t_crit.has_value());  // no crossing: it started failed
  }

  SUBCASE("below the threshold the margin crosses later and t_crit interpolates") {
    const TokenConfiguration cfg = equiangular_configuration(8, 8, 0.0, beta_star * 0.98);
    std::vector<HeadSpec> heads{HeadSpec::scalar(8, 1.0), HeadSpec::scalar(8, 1.0)};
    IntegrateOptions opt;
    opt.dt = 1e-3;
    opt.t_end = 3.0;
    opt.sample_every = 5;
    const TrajectoryRecord rec = integrate(cfg, heads, DynamicsKind::sphere, opt);
    CHECK(rec.condition_tau_ok.front());
    REQUIRE(rec.t_crit.has_value());
    CHECK(*rec.t_crit > 0.0);
    // The interpolated crossing lies between a still-ok and a failed sample.
    size_t k = 1;
    while (k < rec.times.size() && rec.min_tau_margin[k] >= 0.0) ++k;
    REQUIRE(k < rec.times.size());
    CHECK(*rec.t_crit >= rec.times[k - 1]);
    CHECK(*rec.t_crit <= rec.times[k]);
  }
}

TEST_CASE("halt detection on a stationary start") {
  std::vector<Vec> toks(4, Vec{0.0, 1.0});
  const TokenConfiguration cfg = TokenConfiguration::from_unit_tokens(toks, 1.0);
  std::vector<HeadSpec> heads{HeadSpec::scalar(2, 1.0)};
  IntegrateOptions opt;
  opt.dt = 1e-3;
  opt.t_end = 0.1;
  opt.sample_every = 10;
  const TrajectoryRecord rec = integrate(cfg, heads, DynamicsKind::sphere, opt);
  REQUIRE(rec.halted_at.has_value());
}

TEST_CASE("numerical blowup names the offending token") {
  const TokenConfiguration cfg = random_configuration(4, 6, 11, 900.0);
  std::vector<HeadSpec> heads{HeadSpec::scalar(6, 1.0)};
  try {
    (void)step(cfg, heads, DynamicsKind::flat, 1e-3);
    FAIL("expected NumericalBlowupError");
  } catch (const NumericalBlowupError& e) {
    CHECK(e.token() >= 0);
    CHECK(std::string(e.what()).find("token") != std::string::npos);
  }
}

TEST_CASE("random configurations") {
  SUBCASE("determinism and unit norms") {
    const TokenConfiguration a = random_configuration(8, 40, 123);
    const TokenConfiguration b = random_configuration(8, 40, 123);
    CHECK(a.flat() == b.flat());
    const TokenConfiguration c = random_configuration(8, 40, 124);
    CHECK(a.flat() != c.flat());
    CHECK(a.max_unit_norm_error() <= 1e-12);
  }
  SUBCASE("high-dimensional draws are nearly orthogonal") {
    const int d = 400;
    const double bound = 5.0 / std::sqrt(double(d));
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const TokenConfiguration cfg = random_configuration(8, d, 2000 + seed);
      double worst = 0.0;
      for (int i = 0; i < 8; ++i)
        for (int j = i + 1; j < 8; ++j) worst = std::max(worst, std::abs(cfg.alignment(i, j)));
      if (worst >= bound) ++failures;
    }
    CHECK(failures <= 2);
  }
}

TEST_CASE("equiangular configurations") {
  SUBCASE("zero alignment gives an orthonormal frame") {
    const TokenConfiguration cfg = equiangular_configuration(5, 9, 0.0);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        CHECK(cfg.alignment(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));
  }
  SUBCASE("requested Gram matrix is hit exactly") {
    const TokenConfiguration cfg = equiangular_configuration(8, 20, 0.05);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        const double expect = i == j ? 1.0 : 0.05;
        CHECK(std::abs(cfg.alignment(i, j) - expect) <= 1e-12);
      }
  }
  SUBCASE("negative common alignment within the admissible range") {
    const TokenConfiguration cfg = equiangular_configuration(4, 6, -0.2);
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        CHECK(cfg.alignment(i, j) == doctest::Approx(-0.2).epsilon(1e-12));
  }
  SUBCASE("rejects out-of-range alignments and small dimensions") {
    CHECK_THROWS_AS(equiangular_configuration(8, 20, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(equiangular_configuration(8, 20, -1.0 / 7.0), std::invalid_argument);
    CHECK_THROWS_AS(equiangular_configuration(8, 7, 0.1), std::invalid_argument);
  }
}

TEST_CASE("advance runs the flow in both time directions") {
  const TokenConfiguration cfg = random_configuration(6, 10, 55);
  const std::vector<HeadSpec> heads = random_symmetric_heads(5, 10, 2);
  const TokenConfiguration there = advance(cfg, heads, DynamicsKind::sphere, 1e-3, 1e-5);
  const TokenConfiguration back = advance(there, heads, DynamicsKind::sphere, -1e-3, 1e-5);
  for (size_t k = 0; k < cfg.flat().size(); ++k)
    CHECK(back.flat()[k] == doctest::Approx(cfg.flat()[k]).epsilon(1e-12));
}
