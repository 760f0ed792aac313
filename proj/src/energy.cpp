#include "attnflow/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace attnflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kLogDoubleMax = std::log(std::numeric_limits<double>::max());
// Kinetic energy below this counts as a halted state.
constexpr double kHaltKinetic = 1e-16;

Vec derivatives_for(const FlowState& state, const TokenConfiguration& cfg,
                    std::span<const HeadSpec> heads, DynamicsKind kind) {
  if (kind == DynamicsKind::relu_sphere) return token_derivatives(cfg, heads, kind);
  return token_derivatives(state, cfg, kind);
}

}  // namespace

PerHeadEnergy per_head_energy(const TokenConfiguration& cfg, const HeadSpec& head) {
  head.validate();
  if (head.dim() != cfg.dim())
    throw std::invalid_argument("per_head_energy: head dimension mismatch");
  const int n = cfg.count();
  const double beta = cfg.beta();

  // Row log-sums keep the double sum finite at any beta.
  Vec row_log(n);
  Vec mx(cfg.dim());
  Vec s(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      matvec(head.score, cfg.token(j), mx);
      s[j] = beta * dot(cfg.token(i), mx);
    }
    row_log[i] = log_sum_exp(s);
  }
  PerHeadEnergy e;
  const double log_sum = log_sum_exp(row_log);
  e.log_value = log_sum - std::log(2.0 * beta * n * n);
  e.overflow = e.log_value >= kLogDoubleMax;
  e.value = e.overflow ? kInf : std::exp(e.log_value);
  return e;
}

double total_energy(const TokenConfiguration& cfg, std::span<const HeadSpec> heads) {
  double total = 0.0;
  for (const HeadSpec& h : heads) total += per_head_energy(cfg, h).value;
  return total;
}

double total_energy_rate(const FlowState& state, const TokenConfiguration& cfg,
                         DynamicsKind kind) {
  const int n = state.n, d = state.d;
  double rate = 0.0;
  switch (kind) {
    case DynamicsKind::flat:
      for (int i = 0; i < n; ++i) rate += dot(state.velocity(i), state.velocity(i));
      return rate / n;
    case DynamicsKind::sphere:
      for (int i = 0; i < n; ++i) {
        Vec t = project_tangent(cfg.token(i), state.velocity(i));
        rate += dot(t, t);
      }
      return rate / n;
    case DynamicsKind::normalized:
      // (1/n) sum_i Z̄_i ||xdot_i||^2 with Z̄_i the per-head mean partition,
      // matching xdot_i = P(sum_h f / sum_h Z).
      for (int i = 0; i < n; ++i) {
        Vec t = project_tangent(cfg.token(i), state.normalized_velocity(i));
        rate += (state.partition_total[i] / n) * dot(t, t);
      }
      return rate / n;
    case DynamicsKind::relu_sphere:
      break;
  }
  (void)d;
  throw std::invalid_argument("total_energy_rate: no analytic rate for relu_sphere");
}

PerHeadRate per_head_rate(const FlowState& state, const TokenConfiguration& cfg,
                          std::span<const HeadSpec> heads, int head_index,
                          DynamicsKind kind) {
  const int n = state.n;
  if (head_index < 0 || head_index >= state.H)
    throw std::invalid_argument("per_head_rate: head index out of range");

  const Vec xdot = derivatives_for(state, cfg, heads, kind);
  PerHeadRate r;
  for (int i = 0; i < n; ++i)
    r.generic += dot({&xdot[static_cast<size_t>(i) * state.d], static_cast<size_t>(state.d)},
                     state.aggregation(i, head_index));
  r.generic /= static_cast<double>(n) * n;

  const ConditionFlags flags = check_conditions(heads);
  r.certified = flags.certified() && (kind == DynamicsKind::flat || kind == DynamicsKind::sphere);
  if (!r.certified) return r;

  const double n3 = static_cast<double>(n) * n * n;
  if (kind == DynamicsKind::flat) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      auto f = state.aggregation(i, head_index);
      sum += dot(f, f);
    }
    r.closed_form = sum / n3;
    return r;
  }

  // Sphere: tangential power minus radial-shadow interference.
  double tangential = 0.0, shadow = 0.0;
  for (int i = 0; i < n; ++i) {
    const RadialTangential rt = decompose(cfg.token(i), state.aggregation(i, head_index));
    tangential += rt.tangential_norm * rt.tangential_norm;
    shadow += rt.radial * cross_shadow_sum(state, cfg, i, head_index);
  }
  r.tangential_term = tangential / n3;
  r.shadow_term = shadow / n3;
  r.closed_form = r.tangential_term - r.shadow_term;
  return r;
}

OrthogonalityThreshold approx_orth_threshold(const FlowState& state,
                                             const TokenConfiguration& cfg,
                                             std::span<const HeadSpec> heads, int head_index) {
  (void)cfg;
  const int n = state.n, H = state.H;
  if (head_index < 0 || head_index >= H)
    throw std::invalid_argument("approx_orth_threshold: head index out of range");

  OrthogonalityThreshold out;
  double numerator = 0.0, denominator = 0.0;
  Vec mf(state.d);
  for (int i = 0; i < n; ++i) {
    auto f = state.aggregation(i, head_index);
    matvec(heads[head_index].score, f, mf);
    numerator += dot(f, mf);
    double others = 0.0;
    for (int h = 0; h < H; ++h)
      if (h != head_index) others += norm(state.aggregation(i, h));
    denominator += norm(f) * others;
  }
  out.delta_star = denominator > 0.0 ? numerator / denominator : kInf;

  for (int h = 0; h < H; ++h)
    if (h != head_index)
      out.delta = std::max(out.delta, operator_norm(heads[h].score * heads[head_index].score));
  out.sigma_min = smallest_nonzero_singular_value(heads[head_index].score);
  out.delta_prime = out.sigma_min > 0.0 ? out.delta / out.sigma_min
                                        : (out.delta == 0.0 ? 0.0 : kInf);
  out.guaranteed = out.delta_prime <= out.delta_star;
  return out;
}

ValueThreshold approx_value_threshold(const FlowState& state, const TokenConfiguration& cfg) {
  const int n = state.n;
  ValueThreshold out;

  double num = 0.0;
  Vec speeds(n);
  for (int i = 0; i < n; ++i) {
    Vec t = project_tangent(cfg.token(i), state.velocity(i));
    const double sq = dot(t, t);
    speeds[i] = std::sqrt(sq);
    num += sq;
  }
  if (num / n < kHaltKinetic) {
    out.halted = true;
    out.epsilon_star = 0.0;
    return out;
  }
  double den = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = 0.0;
    for (int h = 0; h < state.H; ++h) g += norm(state.unweighted_aggregation(i, h));
    den += speeds[i] * g;
  }
  den /= n;
  out.epsilon_star = num / den;
  return out;
}

double log_partition_energy(const FlowState& state, const TokenConfiguration& cfg) {
  const int n = state.n, H = state.H;
  double g = 0.0;
  for (int i = 0; i < n; ++i)
    g += log_sum_exp({&state.log_partition[static_cast<size_t>(i) * H], static_cast<size_t>(H)});
  return g / (cfg.beta() * n);
}

EnergyReport energy_report(const FlowState& state, const TokenConfiguration& cfg,
                           std::span<const HeadSpec> heads, DynamicsKind kind) {
  const int n = state.n, H = state.H;
  EnergyReport rep;
  rep.per_head.resize(H);
  rep.per_head_log.resize(H);
  rep.per_head_overflow.resize(H);
  rep.total = 0.0;
  for (int h = 0; h < H; ++h) {
    const PerHeadEnergy e = per_head_energy(cfg, heads[h]);
    rep.per_head[h] = e.value;
    rep.per_head_log[h] = e.log_value;
    rep.per_head_overflow[h] = e.overflow;
    rep.total += e.value;
  }

  const Vec xdot = derivatives_for(state, cfg, heads, kind);
  rep.kinetic = 0.0;
  for (int i = 0; i < n; ++i)
    rep.kinetic +=
        dot({&xdot[static_cast<size_t>(i) * state.d], static_cast<size_t>(state.d)},
            {&xdot[static_cast<size_t>(i) * state.d], static_cast<size_t>(state.d)});
  rep.kinetic /= n;

  rep.rate_per_head_analytic.assign(H, kNaN);
  if (kind == DynamicsKind::relu_sphere) {
    rep.rate_total_analytic = kNaN;
  } else {
    rep.rate_total_analytic = total_energy_rate(state, cfg, kind);
    for (int h = 0; h < H; ++h) {
      double g = 0.0;
      for (int i = 0; i < n; ++i)
        g += dot({&xdot[static_cast<size_t>(i) * state.d], static_cast<size_t>(state.d)},
                 state.aggregation(i, h));
      rep.rate_per_head_analytic[h] = g / (static_cast<double>(n) * n);
    }
  }

  rep.log_partition = log_partition_energy(state, cfg);
  rep.radial.resize(static_cast<size_t>(n) * H);
  rep.cross_shadow.resize(static_cast<size_t>(n) * H);
  for (int i = 0; i < n; ++i)
    for (int h = 0; h < H; ++h)
      rep.radial[static_cast<size_t>(i) * H + h] = radial_shadow(state, cfg, i, h);
  for (int i = 0; i < n; ++i)
    for (int h = 0; h < H; ++h) {
      double a = 0.0;
      for (int h2 = 0; h2 < H; ++h2)
        if (h2 != h) a += rep.radial[static_cast<size_t>(i) * H + h2];
      rep.cross_shadow[static_cast<size_t>(i) * H + h] = a;
    }
  return rep;
}

}  // namespace attnflow
