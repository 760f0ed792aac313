#include "attnflow/equiangular.hpp"

#include <cmath>
#include <stdexcept>

#include "attnflow/errors.hpp"

namespace attnflow {

double softmax_rate(double gamma, double lambda, double beta, int n) {
  // The two exponentials are shifted by e^{l b gamma} so the ratio stays
  // finite for any beta.
  const double u = lambda * beta;
  const double shifted = std::exp(u * (1.0 - gamma));
  return 2.0 * lambda * (1.0 - gamma) * (1.0 + (n - 1) * gamma) / (shifted + n - 1);
}

double softmax_rate_unnormalized(double gamma, double lambda, double beta, int n) {
  return 2.0 * lambda / n * std::exp(lambda * beta * gamma) * (1.0 - gamma) *
         (1.0 + (n - 1) * gamma);
}

double relu_rate(double gamma, double lambda, int n) {
  if (gamma <= 0.0) return 0.0;
  return 2.0 * lambda * lambda * gamma / n * (1.0 - gamma) * (1.0 + (n - 1) * gamma);
}

double reduced_rate(double gamma, const ReducedSpec& spec) {
  if (spec.lambdas.empty()) throw std::invalid_argument("reduced_rate: no head strengths");
  if (spec.n < 2) throw std::invalid_argument("reduced_rate: need n >= 2");
  double rate = 0.0;
  for (double lambda : spec.lambdas) {
    switch (spec.kernel) {
      case ReducedSpec::Kernel::softmax:
        rate += spec.normalized ? softmax_rate(gamma, lambda, spec.beta, spec.n)
                                : softmax_rate_unnormalized(gamma, lambda, spec.beta, spec.n);
        break;
      case ReducedSpec::Kernel::relu:
        rate += relu_rate(gamma, lambda, spec.n);
        break;
    }
  }
  return rate;
}

ReducedSeries integrate_reduced(double gamma0, const ReducedSpec& spec, double dt,
                                double t_end) {
  if (dt <= 0.0 || t_end <= 0.0)
    throw std::invalid_argument("integrate_reduced: dt and t_end must be positive");
  const double lo = -1.0 / (spec.n - 1);
  if (!(gamma0 > lo && gamma0 <= 1.0))
    throw std::invalid_argument("integrate_reduced: gamma0 out of range");

  const long steps = std::lround(t_end / dt);
  ReducedSeries out;
  out.times.reserve(steps + 1);
  out.gamma.reserve(steps + 1);
  double g = gamma0;
  out.times.push_back(0.0);
  out.gamma.push_back(g);
  for (long s = 1; s <= steps; ++s) {
    const double k1 = reduced_rate(g, spec);
    const double k2 = reduced_rate(g + 0.5 * dt * k1, spec);
    const double k3 = reduced_rate(g + 0.5 * dt * k2, spec);
    const double k4 = reduced_rate(g + dt * k3, spec);
    g += dt / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
    out.times.push_back(s * dt);
    out.gamma.push_back(g);
  }
  return out;
}

double clustering_time(double gamma0, double target, const ReducedSpec& spec, double dt,
                       double t_max) {
  if (!(gamma0 < target && target < 1.0))
    throw std::invalid_argument("clustering_time: need gamma0 < target < 1");
  const ReducedSeries series = integrate_reduced(gamma0, spec, dt, t_max);
  for (size_t k = 1; k < series.gamma.size(); ++k) {
    if (series.gamma[k] >= target) {
      const double g0 = series.gamma[k - 1], g1 = series.gamma[k];
      const double t0 = series.times[k - 1], t1 = series.times[k];
      if (g1 == g0) return t1;
      return t0 + (t1 - t0) * (target - g0) / (g1 - g0);
    }
  }
  throw TimeoutError("clustering_time: target alignment not reached by t_max");
}

double energy_gap_constant(double lambda, double beta, int n, double epsilon0) {
  if (lambda <= 0.0 || beta <= 0.0 || n < 2 || epsilon0 < 0.0)
    throw std::invalid_argument("energy_gap_constant: bad parameters");
  return (n - 1) * lambda / (2.0 * n) * std::exp(beta * lambda) * epsilon0;
}

double fit_late_time_rate(std::span<const double> times, std::span<const double> gamma,
                          double eps_lo, double eps_hi) {
  if (times.size() != gamma.size())
    throw std::invalid_argument("fit_late_time_rate: series length mismatch");
  double st = 0, sy = 0, stt = 0, sty = 0;
  long count = 0;
  for (size_t k = 0; k < times.size(); ++k) {
    const double eps = 1.0 - gamma[k];
    if (eps < eps_lo || eps > eps_hi) continue;
    const double y = std::log(eps);
    st += times[k];
    sy += y;
    stt += times[k] * times[k];
    sty += times[k] * y;
    ++count;
  }
  if (count < 2)
    throw InfeasibleRegimeError("fit_late_time_rate: fewer than two samples in the fit window");
  const double denom = count * stt - st * st;
  return (count * sty - st * sy) / denom;
}

double fit_late_time_rate(const ReducedSeries& series, double eps_lo, double eps_hi) {
  return fit_late_time_rate(series.times, series.gamma, eps_lo, eps_hi);
}

}  // namespace attnflow
