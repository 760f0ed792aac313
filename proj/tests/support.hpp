#pragma once

// Shared fixtures and independent oracles for the test suites. The
// finite-difference oracles here deliberately re-derive rates from energy
// and entropy values along the integrated flow, so they share no code with
// the analytic formulas they check.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "attnflow/attention.hpp"
#include "attnflow/dynamics.hpp"
#include "attnflow/energy.hpp"
#include "attnflow/entropy.hpp"

namespace testsupport {

using namespace attnflow;

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdSubStep = 1e-7;

inline HeadSpec random_symmetric_head(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      const double v = gauss(rng);
      m(i, j) = v;
      m(j, i) = v;
    }
  const double s = operator_norm(m);
  return HeadSpec::from_matrix(scale / s * m);
}

inline std::vector<HeadSpec> random_symmetric_heads(std::uint64_t seed, int d, int count,
                                                    double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::vector<HeadSpec> heads;
  for (int h = 0; h < count; ++h) heads.push_back(random_symmetric_head(rng, d, scale));
  return heads;
}

inline std::vector<HeadSpec> block_projection_heads(int d, int count) {
  std::vector<HeadSpec> heads;
  for (int h = 0; h < count; ++h)
    heads.push_back(HeadSpec::coordinate_projection(d, h * d / count, (h + 1) * d / count));
  return heads;
}

/// Central difference of the total energy along the flow map.
inline double fd_total_energy_rate(const TokenConfiguration& cfg,
                                   std::span<const HeadSpec> heads, DynamicsKind kind) {
  const TokenConfiguration plus = advance(cfg, heads, kind, kFdStep, kFdSubStep);
  const TokenConfiguration minus = advance(cfg, heads, kind, -kFdStep, kFdSubStep);
  return (total_energy(plus, heads) - total_energy(minus, heads)) / (2.0 * kFdStep);
}

/// Central difference of one head's energy along the flow map.
inline double fd_per_head_energy_rate(const TokenConfiguration& cfg,
                                      std::span<const HeadSpec> heads, int h,
                                      DynamicsKind kind) {
  const TokenConfiguration plus = advance(cfg, heads, kind, kFdStep, kFdSubStep);
  const TokenConfiguration minus = advance(cfg, heads, kind, -kFdStep, kFdSubStep);
  return (per_head_energy(plus, heads[h]).value - per_head_energy(minus, heads[h]).value) /
         (2.0 * kFdStep);
}

/// Central difference of the attention entropy of (token, head) cells.
/// Returns the full n*H table.
inline std::vector<double> fd_entropy_rates(const TokenConfiguration& cfg,
                                            std::span<const HeadSpec> heads,
                                            DynamicsKind kind) {
  auto entropies = [&](const TokenConfiguration& c) {
    const FlowState st = compute_flow_state(c, heads);
    std::vector<double> out;
    for (int i = 0; i < st.n; ++i)
      for (int h = 0; h < st.H; ++h) {
        double e = 0.0;
        for (double p : st.attention_row(i, h))
          if (p > 0.0) e -= p * std::log(p);
        out.push_back(e);
      }
    return out;
  };
  const std::vector<double> plus = entropies(advance(cfg, heads, kind, kFdStep, kFdSubStep));
  const std::vector<double> minus = entropies(advance(cfg, heads, kind, -kFdStep, kFdSubStep));
  std::vector<double> rates(plus.size());
  for (size_t k = 0; k < plus.size(); ++k) rates[k] = (plus[k] - minus[k]) / (2.0 * kFdStep);
  return rates;
}

/// Exact time coordinate of the separable relu alignment equation:
/// t(gamma) - t(gamma0) = (n / (2 lambda^2)) (F(gamma) - F(gamma0)).
inline double relu_time_coordinate(double gamma, int n) {
  return std::log(gamma) - std::log(1.0 - gamma) / n -
         (n - 1.0) / n * std::log(1.0 + (n - 1.0) * gamma);
}

}  // namespace testsupport
