#pragma once

#include <span>
#include <vector>

namespace attnflow {

/// Scalar reduction of the token dynamics for equiangular configurations:
/// the common alignment gamma evolves by an ODE in gamma alone.
struct ReducedSpec {
  enum class Kernel { softmax, relu };
  Kernel kernel = Kernel::softmax;
  std::vector<double> lambdas;  ///< head strengths
  double beta = 1.0;            ///< softmax only
  int n = 8;
  /// Softmax only: true uses the per-head-partition-normalized rate (the
  /// closed-form ODE); false uses the raw summed-kernel velocity convention,
  /// whose late-time rate is 2 sum_h lambda_h e^{beta lambda_h} instead of
  /// 2 sum_h lambda_h.
  bool normalized = true;
};

/// Normalized single-head softmax rate
/// g(gamma) = 2 lambda e^{l b gamma} (1-gamma)(1+(n-1)gamma) / (e^{l b} + (n-1) e^{l b gamma}).
double softmax_rate(double gamma, double lambda, double beta, int n);

/// Same driving force without the partition denominator (and with the 1/n of
/// the raw velocity convention).
double softmax_rate_unnormalized(double gamma, double lambda, double beta, int n);

/// ReLU-kernel rate (2 lambda^2 gamma / n)(1-gamma)(1+(n-1)gamma) for
/// gamma > 0; exactly zero at gamma <= 0 (the kernel is silent there).
double relu_rate(double gamma, double lambda, int n);

/// gamma-dot for the given spec (sum over heads).
double reduced_rate(double gamma, const ReducedSpec& spec);

struct ReducedSeries {
  std::vector<double> times;
  std::vector<double> gamma;
};

/// RK4 on the scalar ODE. gamma is non-decreasing for gamma0 in (0, 1).
ReducedSeries integrate_reduced(double gamma0, const ReducedSpec& spec, double dt,
                                double t_end);

/// First time gamma reaches target, linearly interpolated between samples.
/// Throws TimeoutError when target is not reached by t_max.
double clustering_time(double gamma0, double target, const ReducedSpec& spec, double dt,
                       double t_max);

/// C_h = ((n-1) lambda / (2n)) e^{beta lambda} eps0, the prefactor of the
/// late-time per-head energy-gap bound C_h e^{-2 Lambda t}.
double energy_gap_constant(double lambda, double beta, int n, double epsilon0);

/// Least-squares slope of log(1 - gamma) over the window where
/// 1 - gamma lies in [eps_lo, eps_hi]. Throws InfeasibleRegimeError when the
/// window holds fewer than two samples.
double fit_late_time_rate(const ReducedSeries& series, double eps_lo = 1e-6,
                          double eps_hi = 1e-3);

/// Same fit applied to an arbitrary (t, gamma) series.
double fit_late_time_rate(std::span<const double> times, std::span<const double> gamma,
                          double eps_lo = 1e-6, double eps_hi = 1e-3);

}  // namespace attnflow
