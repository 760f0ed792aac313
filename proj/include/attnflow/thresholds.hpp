#pragma once

#include <optional>
#include <span>

namespace attnflow {

/// Principal branch of the Lambert W function on [-1/e, inf).
/// Halley iteration; round-trip residual |W e^W - z| <= 1e-13 * max(1, |z|).
double lambert_w0(double z);

/// Positive root of rho^2 + (H-1) rho - 1 = 0. Strictly decreasing in H,
/// equal to 1 at H = 1 and to 1/golden-ratio at H = 2.
double critical_alignment(int head_count);

/// Largest inverse temperature at which radial dominance holds for H scalar
/// heads (strength alpha) on n mutually orthogonal tokens. Requires H >= 2
/// and n > 1 / critical_alignment(H)^2; throws InfeasibleRegimeError below
/// that.
double critical_beta(double alpha, int head_count, int n);

/// Early-time clustering rate of a scalar head and its first two lambda
/// derivatives: phi(lambda) = 2 lambda / (e^{lambda beta} + n - 1).
struct RateFunction {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
};

RateFunction rate_function(double lambda, double beta, int n);

/// Maximizer of phi: lambda* = (1 + W((n-1)/e)) / beta.
double optimal_strength(double beta, int n);

/// Unique inflection point lambda_c > lambda* of phi, from
/// (lambda_c beta - 2) e^{lambda_c beta} = (lambda_c beta + 2)(n - 1).
double inflection_strength(double beta, int n);

/// sum_h phi(lambda_h) - H phi(mean). condition_ok reports the printed
/// sufficient condition max|lambda_h - mean| < 3 phi''(mean) min_h lambda_h /
/// (beta^2 max_h phi(lambda_h)); it is false whenever phi''(mean) <= 0.
struct SuperadditivityMargin {
  double margin = 0.0;
  bool condition_ok = false;
};

SuperadditivityMargin superadditivity_margin(std::span<const double> lambdas, double beta, int n);

/// The closed-form constants for one (H, n, beta, alpha) tuple.
/// critical_beta is absent when the orthogonal-token threshold does not
/// exist (H = 1 or n <= 1/c*^2).
struct ThresholdSet {
  int head_count = 1;
  double critical_alignment = 1.0;
  std::optional<double> critical_beta;
  double optimal_strength = 0.0;
  double inflection_strength = 0.0;
  int n = 2;
  double beta = 1.0;
  double alpha = 1.0;
};

ThresholdSet compute_thresholds(int head_count, int n, double beta, double alpha);

}  // namespace attnflow
