#include "attnflow/thresholds.hpp"

#include <cmath>
#include <stdexcept>

#include "attnflow/errors.hpp"

namespace attnflow {

double lambert_w0(double z) {
  const double branch_point = -1.0 / std::exp(1.0);
  if (z < branch_point - 1e-15) throw std::invalid_argument("lambert_w0: z below -1/e");
  if (z <= branch_point) return -1.0;
  if (z == 0.0) return 0.0;

  double w;
  if (z < 0.0) {
    // Series around the branch point.
    const double p = std::sqrt(2.0 * (std::exp(1.0) * z + 1.0));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (z < std::exp(1.0)) {
    w = std::log1p(z);
  } else {
    const double l = std::log(z);
    w = l - std::log(l);
  }

  for (int it = 0; it < 64; ++it) {
    const double ew = std::exp(w);
    const double r = w * ew - z;
    if (std::abs(r) <= 1e-14 * std::max(1.0, std::abs(z))) break;
    // Halley update.
    const double denom = ew * (w + 1.0) - (w + 2.0) * r / (2.0 * w + 2.0);
    w -= r / denom;
  }
  return w;
}

double critical_alignment(int head_count) {
  if (head_count < 1) throw std::invalid_argument("critical_alignment: need H >= 1");
  const double k = head_count - 1.0;
  // 2 / (sqrt(k^2+4) + k) avoids cancellation at large H.
  return 2.0 / (std::sqrt(k * k + 4.0) + k);
}

double critical_beta(double alpha, int head_count, int n) {
  if (alpha <= 0.0) throw std::invalid_argument("critical_beta: alpha must be positive");
  if (head_count < 2) throw std::invalid_argument("critical_beta: need H >= 2");
  if (n < 2) throw std::invalid_argument("critical_beta: need n >= 2");
  const double c = critical_alignment(head_count);
  const double c2 = c * c;
  if (n <= 1.0 / c2)
    throw InfeasibleRegimeError("critical_beta: requires n > 1/c*(H)^2");
  return std::log(c2 * (n - 1) / (1.0 - c2)) / (2.0 * alpha);
}

RateFunction rate_function(double lambda, double beta, int n) {
  if (lambda <= 0.0 || beta <= 0.0 || n < 2)
    throw std::invalid_argument("rate_function: need lambda > 0, beta > 0, n >= 2");
  const double E = std::exp(lambda * beta);
  const double sigma = E + n - 1;
  RateFunction rf;
  rf.value = 2.0 * lambda / sigma;
  rf.first = 2.0 * ((1.0 - lambda * beta) * E + n - 1) / (sigma * sigma);
  rf.second = 2.0 * beta * E * ((lambda * beta - 2.0) * E - (lambda * beta + 2.0) * (n - 1)) /
              (sigma * sigma * sigma);
  return rf;
}

double optimal_strength(double beta, int n) {
  if (beta <= 0.0 || n < 2)
    throw std::invalid_argument("optimal_strength: need beta > 0, n >= 2");
  return (1.0 + lambert_w0((n - 1) / std::exp(1.0))) / beta;
}

double inflection_strength(double beta, int n) {
  if (beta <= 0.0 || n < 2)
    throw std::invalid_argument("inflection_strength: need beta > 0, n >= 2");
  // Root of (u-2) e^u = (u+2)(n-1) in u = lambda*beta; negative at the phi
  // maximum, positive once u-2 dominates, so the bracket below always works.
  auto residual = [&](double lambda) {
    const double u = lambda * beta;
    return (u - 2.0) * std::exp(u) - (u + 2.0) * (n - 1);
  };
  double lo = optimal_strength(beta, n);
  double hi = lo + 40.0 / beta;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

SuperadditivityMargin superadditivity_margin(std::span<const double> lambdas, double beta,
                                             int n) {
  if (lambdas.empty()) throw std::invalid_argument("superadditivity_margin: no strengths");
  for (double l : lambdas)
    if (l <= 0.0) throw std::invalid_argument("superadditivity_margin: strengths must be positive");

  const int H = static_cast<int>(lambdas.size());
  double mean = 0.0;
  for (double l : lambdas) mean += l;
  mean /= H;

  SuperadditivityMargin out;
  for (double l : lambdas) out.margin += rate_function(l, beta, n).value;
  out.margin -= H * rate_function(mean, beta, n).value;

  const double phi2_mean = rate_function(mean, beta, n).second;
  if (phi2_mean > 0.0) {
    double max_dev = 0.0, min_lambda = lambdas[0], max_phi = 0.0;
    for (double l : lambdas) {
      max_dev = std::max(max_dev, std::abs(l - mean));
      min_lambda = std::min(min_lambda, l);
      max_phi = std::max(max_phi, rate_function(l, beta, n).value);
    }
    out.condition_ok = max_dev < 3.0 * phi2_mean * min_lambda / (beta * beta * max_phi);
  }
  return out;
}

ThresholdSet compute_thresholds(int head_count, int n, double beta, double alpha) {
  ThresholdSet ts;
  ts.head_count = head_count;
  ts.n = n;
  ts.beta = beta;
  ts.alpha = alpha;
  ts.critical_alignment = critical_alignment(head_count);
  ts.optimal_strength = optimal_strength(beta, n);
  ts.inflection_strength = inflection_strength(beta, n);
  if (head_count >= 2) {
    try {
      ts.critical_beta = critical_beta(alpha, head_count, n);
    } catch (const InfeasibleRegimeError&) {
      ts.critical_beta = std::nullopt;
    }
  }
  return ts;
}

}  // namespace attnflow
