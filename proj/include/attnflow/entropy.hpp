#pragma once

#include <span>
#include <vector>

#include "attnflow/attention.hpp"

namespace attnflow {

/// Attention entropies, score velocities, and the covariance whose negative
/// beta^2 multiple equals dH/dt exactly. production_rate is computed from the
/// same covariance value, not by a separate path. Blocks indexed [i*H + h].
struct EntropyReport {
  int n = 0, H = 0;
  std::vector<double> entropy;            ///< H_i^h in [0, log n]
  std::vector<Vec> scores;                ///< s_j = <x_i, M_h x_j>, length n
  std::vector<Vec> score_velocity;        ///< sdot_j (component I + II)
  std::vector<Vec> score_velocity_i;      ///< <xdot_i, M_h x_j>
  std::vector<Vec> score_velocity_ii;     ///< <M_h x_i, xdot_j>
  std::vector<double> covariance;         ///< Cov_p(s, sdot)
  std::vector<double> variance;           ///< Var_p(s)
  std::vector<double> cross_shadow;       ///< A_h^{(i)} = sum_{h' != h} a_i^{h'}
  std::vector<double> production_rate;    ///< dH_i^h/dt = -beta^2 * covariance

  double entropy_at(int i, int h) const { return entropy[static_cast<size_t>(i) * H + h]; }
  double covariance_at(int i, int h) const { return covariance[static_cast<size_t>(i) * H + h]; }
  double production_at(int i, int h) const {
    return production_rate[static_cast<size_t>(i) * H + h];
  }
};

/// token_derivatives must be the actual xdot of the dynamics being analyzed
/// (flattened n*d, as produced by attnflow::token_derivatives).
EntropyReport entropy_report(const FlowState& state, const TokenConfiguration& cfg,
                             std::span<const HeadSpec> heads, const Vec& token_derivatives);

/// Closed form of Cov_p(s, sdot) for a scalar head on an equiangular
/// configuration, where scores and velocities each take two values:
/// -p_self (1 - p_self) * lambda (1 - gamma) * lambda * gamma_dot.
/// Non-positive whenever gamma_dot >= 0.
double two_group_covariance(double lambda, double beta, double gamma, int n, double gamma_dot);

/// Cross-head part of Cov_p(s, sdot^I) under sphere dynamics: the covariance
/// of s_j against <xdot_i^{(-h)}, M_h x_j> with xdot_i^{(-h)} the tangential
/// velocity contributed by the other heads. Under certified heads this equals
/// -(A_h^{(i)}/n) Var_p(s). Throws NotCertifiedError unless the head family
/// satisfies all of S, V, O, P at 1e-10.
double cross_head_covariance(const FlowState& state, const TokenConfiguration& cfg,
                             std::span<const HeadSpec> heads, int token_index, int head_index);

/// Both sides of the entropy condition for head h at token i, together with
/// the three-term decomposition of dH_i^h/dt they come from (single-head
/// term, shadow-variance term, cross-covariance term; the terms sum to the
/// production rate). ok: lhs >= rhs - 1e-12. Requires certified heads.
struct ConditionEReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
  double term_single = 0.0;
  double term_shadow = 0.0;
  double term_cross = 0.0;
  double decomposition_total() const { return term_single + term_shadow + term_cross; }
};

ConditionEReport check_condition_E(const FlowState& state, const TokenConfiguration& cfg,
                                   std::span<const HeadSpec> heads, int token_index,
                                   int head_index);

}  // namespace attnflow
