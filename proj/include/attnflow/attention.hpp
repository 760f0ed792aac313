#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "attnflow/geometry.hpp"
#include "attnflow/linalg.hpp"

namespace attnflow {

/// Token update rules. The first three weight interactions by the softmax
/// kernel e^{beta s}; relu_sphere weights by max(0, s) instead and always
/// projects tangentially.
enum class DynamicsKind { flat, sphere, normalized, relu_sphere };

const char* to_string(DynamicsKind kind);
std::optional<DynamicsKind> dynamics_kind_from_string(std::string_view name);

/// One attention head: a score matrix, a value matrix (equal to the score
/// matrix unless values are deliberately perturbed), and an optional scalar
/// strength recorded when the score matrix is a multiple of the identity.
struct HeadSpec {
  Matrix score;
  Matrix value;
  std::optional<double> scalar_strength;
  /// Declared operator-norm bound on value - score.
  double value_perturbation_norm = 0.0;

  int dim() const { return score.rows; }
  bool value_aligned(double tol = 1e-12) const;
  void validate() const;

  static HeadSpec scalar(int d, double strength);
  static HeadSpec from_matrix(Matrix m);
  static HeadSpec with_value(Matrix score, Matrix value, double perturbation_norm);
  /// Orthogonal projection onto coordinates [begin, end).
  static HeadSpec coordinate_projection(int d, int begin, int end);
};

/// n points in R^d with a shared inverse temperature. Points produced by the
/// sphere constructors are unit-norm; flat dynamics moves them off the
/// sphere, so the norm invariant is checked only where sphere semantics
/// require it.
class TokenConfiguration {
 public:
  /// Validates every token to unit norm (1e-12).
  static TokenConfiguration from_unit_tokens(const std::vector<Vec>& tokens, double beta);
  /// No norm validation; states reached by flat dynamics live here.
  static TokenConfiguration from_points(int n, int d, Vec flat, double beta);

  int count() const { return n_; }
  int dim() const { return d_; }
  double beta() const { return beta_; }

  std::span<const double> token(int i) const { return {&x_[static_cast<size_t>(i) * d_], static_cast<size_t>(d_)}; }
  std::span<double> token_mut(int i) { return {&x_[static_cast<size_t>(i) * d_], static_cast<size_t>(d_)}; }
  const Vec& flat() const { return x_; }

  double alignment(int i, int j) const { return dot(token(i), token(j)); }
  /// Mean of <x_i, x_j> over unordered pairs i < j.
  double mean_alignment() const;
  double max_unit_norm_error() const;

 private:
  TokenConfiguration(int n, int d, Vec x, double beta);
  int n_ = 0, d_ = 0;
  double beta_ = 1.0;
  Vec x_;  // row-major n x d
};

/// Everything the kernel computes in one pass over a configuration.
/// Layout: per-(token, head) blocks are indexed [i*H + h].
struct FlowState {
  int n = 0, d = 0, H = 0;

  Vec aggregations;            ///< f_i^h = sum_j e^{beta s_ij} W_h x_j        [n*H*d]
  Vec unweighted;              ///< g_i^h = sum_j e^{beta s_ij} x_j            [n*H*d]
  Vec mean_aggregations;       ///< sum_j p_ij W_h x_j (finite at any beta)    [n*H*d]
  Vec mean_unweighted;         ///< sum_j p_ij x_j                             [n*H*d]
  Vec velocities;              ///< v_i = (1/n) sum_h f_i^h                    [n*d]
  Vec normalized_velocities;   ///< sum_h f_i^h / sum_h Z_i^h                  [n*d]
  Vec scores;                  ///< s_ij = <x_i, M_h x_j>                      [n*H*n]
  Vec attention;               ///< p_ij^h, each row sums to 1                 [n*H*n]
  Vec partition;               ///< Z_i^h (+inf when not representable)        [n*H]
  Vec log_partition;           ///< log Z_i^h (always finite)                  [n*H]
  Vec partition_total;         ///< Z_i = sum_h Z_i^h                          [n]
  std::vector<std::uint8_t> overflow;  ///< Z_i^h exceeded double range        [n*H]

  FlowState() = default;
  FlowState(int n_, int d_, int H_);

  std::span<const double> aggregation(int i, int h) const { return block(aggregations, i, h, d); }
  std::span<const double> unweighted_aggregation(int i, int h) const { return block(unweighted, i, h, d); }
  std::span<const double> mean_aggregation(int i, int h) const { return block(mean_aggregations, i, h, d); }
  std::span<const double> score_row(int i, int h) const { return block(scores, i, h, n); }
  std::span<const double> attention_row(int i, int h) const { return block(attention, i, h, n); }
  std::span<const double> velocity(int i) const { return {&velocities[static_cast<size_t>(i) * d], static_cast<size_t>(d)}; }
  std::span<const double> normalized_velocity(int i) const { return {&normalized_velocities[static_cast<size_t>(i) * d], static_cast<size_t>(d)}; }
  double z(int i, int h) const { return partition[static_cast<size_t>(i) * H + h]; }
  double log_z(int i, int h) const { return log_partition[static_cast<size_t>(i) * H + h]; }
  bool overflowed(int i, int h) const { return overflow[static_cast<size_t>(i) * H + h] != 0; }
  bool any_overflow() const;

 private:
  std::span<const double> block(const Vec& v, int i, int h, int len) const {
    return {&v[(static_cast<size_t>(i) * H + h) * len], static_cast<size_t>(len)};
  }
};

/// Attention state of a configuration under the given heads. Scores always
/// use the score matrix; aggregations apply the value matrix. Token rows are
/// computed in parallel; sums over j and h run in ascending index order, so
/// results are bit-identical for any thread count.
FlowState compute_flow_state(const TokenConfiguration& cfg, std::span<const HeadSpec> heads);

/// Plain-loop single-thread reference for the kernel above (no log-sum-exp
/// shift, no parallelism). Kept for validating the production kernel.
FlowState compute_flow_state_reference(const TokenConfiguration& cfg,
                                       std::span<const HeadSpec> heads);

/// Time derivative of every token under the chosen dynamics, flattened n*d.
/// The FlowState overload covers the softmax kinds; relu_sphere needs the
/// head list and recomputes its own aggregation.
Vec token_derivatives(const FlowState& state, const TokenConfiguration& cfg, DynamicsKind kind);
Vec token_derivatives(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                      DynamicsKind kind);

/// Static structural conditions of a head family, each measured at the given
/// tolerance: per-head score symmetry, value alignment and projection
/// structure, plus pairwise subspace orthogonality with the measured
/// operator norms.
struct ConditionFlags {
  double tolerance = 1e-10;
  std::vector<std::uint8_t> score_symmetric;  ///< per head
  std::vector<std::uint8_t> value_aligned;    ///< per head
  std::vector<std::uint8_t> projection;       ///< per head
  std::vector<std::uint8_t> orthogonal_pair;  ///< [h1*H + h2], h1 != h2
  std::vector<double> pair_delta;             ///< ||M_{h1} M_{h2}||_op
  double max_delta = 0.0;
  bool all_symmetric = false;
  bool all_value_aligned = false;
  bool all_projection = false;
  bool all_orthogonal = false;

  /// All of S, V, O, P hold; the per-head closed forms are then exact.
  bool certified() const {
    return all_symmetric && all_value_aligned && all_projection && all_orthogonal;
  }
};

ConditionFlags check_conditions(std::span<const HeadSpec> heads, double tolerance = 1e-10);

/// Radial dominance margins m_i^h = (b_i^h)^2 / ||f_i^h|| - sum_{h' != h} |a_i^{h'}|.
/// The condition holds at (i, h) when the margin is non-negative.
struct RadialDominanceReport {
  int n = 0, H = 0;
  std::vector<double> margin;     ///< [i*H + h]
  std::vector<std::uint8_t> ok;   ///< [i*H + h]
  double min_margin = 0.0;
  bool all_ok = true;

  double margin_at(int i, int h) const { return margin[static_cast<size_t>(i) * H + h]; }
  bool ok_at(int i, int h) const { return ok[static_cast<size_t>(i) * H + h] != 0; }
};

RadialDominanceReport check_radial_dominance(const FlowState& state,
                                             const TokenConfiguration& cfg);

/// Radial component a_i^h = <f_i^h, x_i>.
double radial_shadow(const FlowState& state, const TokenConfiguration& cfg, int i, int h);
/// A_h^{(i)} = sum_{h' != h} a_i^{h'}.
double cross_shadow_sum(const FlowState& state, const TokenConfiguration& cfg, int i, int h);

}  // namespace attnflow
