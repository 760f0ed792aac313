#pragma once

#include <span>
#include <vector>

#include "attnflow/attention.hpp"

namespace attnflow {

/// Interaction energy of one head, (1/(2 beta n^2)) sum_ij e^{beta s_ij}.
/// log_value is always finite; value is +inf when the sum exceeds double
/// range, with the overflow flag set.
struct PerHeadEnergy {
  double value = 0.0;
  double log_value = 0.0;
  bool overflow = false;
};

PerHeadEnergy per_head_energy(const TokenConfiguration& cfg, const HeadSpec& head);
double total_energy(const TokenConfiguration& cfg, std::span<const HeadSpec> heads);

/// Analytic time derivative of the total energy under the chosen dynamics:
///   flat / sphere:  (1/n) sum_i ||xdot_i||^2
///   normalized:     (1/n) sum_i (Z_i / n) ||xdot_i||^2
/// relu_sphere has no such closed form and is rejected.
double total_energy_rate(const FlowState& state, const TokenConfiguration& cfg,
                         DynamicsKind kind);

/// Per-head energy derivative. The generic form (1/n^2) sum_i <xdot_i, f_i^h>
/// is always computed; when the head family is certified (symmetric, value
/// aligned, orthogonal, projection) the flat and sphere closed forms are
/// filled in as well, split into the tangential-power and radial-shadow
/// interference terms for the sphere.
struct PerHeadRate {
  double generic = 0.0;
  bool certified = false;
  double closed_form = 0.0;
  double tangential_term = 0.0;  ///< (1/n^3) sum_i (b_i^h)^2 (sphere only)
  double shadow_term = 0.0;      ///< (1/n^3) sum_i a_i^h A_h^{(i)} (sphere only)
};

PerHeadRate per_head_rate(const FlowState& state, const TokenConfiguration& cfg,
                          std::span<const HeadSpec> heads, int head_index,
                          DynamicsKind kind);

/// Data-dependent orthogonality threshold for head h under flat dynamics,
/// with the measured delta = max_{h' != h} ||M_{h'} M_h||_op and
/// delta' = delta / sigma_min(M_h). delta_star is +inf when every cross-head
/// aggregation vanishes.
struct OrthogonalityThreshold {
  double delta_star = 0.0;
  double delta = 0.0;
  double delta_prime = 0.0;
  double sigma_min = 0.0;
  bool guaranteed = false;  ///< delta_prime <= delta_star
};

OrthogonalityThreshold approx_orth_threshold(const FlowState& state,
                                             const TokenConfiguration& cfg,
                                             std::span<const HeadSpec> heads, int head_index);

/// Largest value-perturbation norm that still guarantees a non-decreasing
/// total energy under sphere dynamics at this state. Zero with the halt flag
/// when the dynamics have stopped.
struct ValueThreshold {
  double epsilon_star = 0.0;
  bool halted = false;
};

ValueThreshold approx_value_threshold(const FlowState& state, const TokenConfiguration& cfg);

/// Log-partition energy G = (1/(beta n)) sum_i log Z_i. Its derivative has no
/// sign guarantee under any of the dynamics.
double log_partition_energy(const FlowState& state, const TokenConfiguration& cfg);

/// Everything above bundled for trajectory recording.
struct EnergyReport {
  std::vector<double> per_head;            ///< E^h (+inf on overflow)
  std::vector<double> per_head_log;        ///< log E^h
  std::vector<std::uint8_t> per_head_overflow;
  double total = 0.0;
  double rate_total_analytic = 0.0;        ///< NaN for relu_sphere
  std::vector<double> rate_per_head_analytic;  ///< generic forms; NaN for relu_sphere
  double kinetic = 0.0;                    ///< (1/n) sum ||xdot||^2
  double log_partition = 0.0;              ///< G
  std::vector<double> radial;              ///< a_i^h            [i*H + h]
  std::vector<double> cross_shadow;        ///< A_h^{(i)}        [i*H + h]
};

EnergyReport energy_report(const FlowState& state, const TokenConfiguration& cfg,
                           std::span<const HeadSpec> heads, DynamicsKind kind);

}  // namespace attnflow
