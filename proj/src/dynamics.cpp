#include "attnflow/dynamics.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "attnflow/errors.hpp"

namespace attnflow {

namespace {

constexpr double kHaltKinetic = 1e-16;
constexpr int kHaltSamples = 3;

bool is_sphere_kind(DynamicsKind kind) { return kind != DynamicsKind::flat; }

void check_finite(const Vec& xdot, int n, int d, const char* where) {
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k)
      if (!std::isfinite(xdot[static_cast<size_t>(i) * d + k]))
        throw NumericalBlowupError(
            i, std::string(where) + ": non-finite velocity at token " + std::to_string(i));
}

Vec field(const Vec& points, const TokenConfiguration& proto, std::span<const HeadSpec> heads,
          DynamicsKind kind) {
  const TokenConfiguration cfg =
      TokenConfiguration::from_points(proto.count(), proto.dim(), points, proto.beta());
  Vec xdot = token_derivatives(cfg, heads, kind);
  check_finite(xdot, proto.count(), proto.dim(), "step");
  return xdot;
}

double attention_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double q : p)
    if (q > 0.0) h -= q * std::log(q);
  return h;
}

}  // namespace

namespace {

// One RK4 step with a signed dt; the public step() restricts to dt > 0.
TokenConfiguration rk4_signed(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                              DynamicsKind kind, double dt) {
  const int n = cfg.count(), d = cfg.dim();
  const size_t len = static_cast<size_t>(n) * d;
  const Vec& x0 = cfg.flat();

  const Vec k1 = field(x0, cfg, heads, kind);
  Vec xs(len);
  for (size_t k = 0; k < len; ++k) xs[k] = x0[k] + 0.5 * dt * k1[k];
  const Vec k2 = field(xs, cfg, heads, kind);
  for (size_t k = 0; k < len; ++k) xs[k] = x0[k] + 0.5 * dt * k2[k];
  const Vec k3 = field(xs, cfg, heads, kind);
  for (size_t k = 0; k < len; ++k) xs[k] = x0[k] + dt * k3[k];
  const Vec k4 = field(xs, cfg, heads, kind);

  Vec x1(len);
  for (size_t k = 0; k < len; ++k)
    x1[k] = x0[k] + dt / 6.0 * (k1[k] + 2.0 * (k2[k] + k3[k]) + k4[k]);

  if (is_sphere_kind(kind)) {
    for (int i = 0; i < n; ++i) {
      std::span<double> xi{&x1[static_cast<size_t>(i) * d], static_cast<size_t>(d)};
      const double nx = norm(xi);
      if (nx <= kDegenerateNorm)
        throw DegenerateStateError("step: token " + std::to_string(i) +
                                   " collapsed to the origin");
      for (double& c : xi) c /= nx;
    }
  }
  return TokenConfiguration::from_points(n, d, std::move(x1), cfg.beta());
}

}  // namespace

TokenConfiguration step(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                        DynamicsKind kind, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("step: dt must be positive");
  if (is_sphere_kind(kind) && cfg.max_unit_norm_error() > 1e-9)
    throw std::invalid_argument("step: sphere dynamics require unit-norm tokens");
  return rk4_signed(cfg, heads, kind, dt);
}

TokenConfiguration advance(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                           DynamicsKind kind, double duration, double sub_dt) {
  if (sub_dt <= 0.0) throw std::invalid_argument("advance: sub_dt must be positive");
  if (duration == 0.0) return cfg;
  const long steps = std::max(1L, std::lround(std::abs(duration) / sub_dt));
  const double dt = duration / steps;
  TokenConfiguration current = cfg;
  for (long s = 0; s < steps; ++s) current = rk4_signed(current, heads, kind, dt);
  return current;
}

TrajectoryRecord integrate(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                           DynamicsKind kind, const IntegrateOptions& options) {
  if (options.dt <= 0.0 || options.t_end <= 0.0)
    throw std::invalid_argument("integrate: dt and t_end must be positive");
  if (options.sample_every < 1)
    throw std::invalid_argument("integrate: sample_every must be >= 1");

  const int n = cfg.count(), H = static_cast<int>(heads.size());
  const long total_steps = std::lround(options.t_end / options.dt);

  TrajectoryRecord rec;
  TokenConfiguration current = cfg;
  int low_kinetic_run = 0;

  auto record_sample = [&](double t) {
    const FlowState st = compute_flow_state(current, heads);
    rec.times.push_back(t);
    rec.energies.push_back(energy_report(st, current, heads, kind));
    rec.mean_alignment.push_back(current.mean_alignment());
    if (options.record_pairwise) {
      std::vector<double> gram(static_cast<size_t>(n) * n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) gram[static_cast<size_t>(i) * n + j] = current.alignment(i, j);
      rec.pairwise.push_back(std::move(gram));
    }
    std::vector<double> ent(static_cast<size_t>(n) * H);
    for (int i = 0; i < n; ++i)
      for (int h = 0; h < H; ++h)
        ent[static_cast<size_t>(i) * H + h] = attention_entropy(st.attention_row(i, h));
    rec.entropies.push_back(std::move(ent));

    const RadialDominanceReport rd = check_radial_dominance(st, current);
    rec.condition_tau_ok.push_back(rd.all_ok ? 1 : 0);
    rec.min_tau_margin.push_back(rd.min_margin);
    if (!rec.t_crit && rec.min_tau_margin.size() >= 2) {
      const size_t k = rec.min_tau_margin.size() - 1;
      const double m0 = rec.min_tau_margin[k - 1], m1 = rec.min_tau_margin[k];
      if (m0 >= 0.0 && m1 < 0.0) {
        const double t0 = rec.times[k - 1], t1 = rec.times[k];
        rec.t_crit = t0 + (t1 - t0) * m0 / (m0 - m1);  // linear in the margin
      }
    }

    const double kinetic = rec.energies.back().kinetic;
    low_kinetic_run = kinetic < kHaltKinetic ? low_kinetic_run + 1 : 0;
    if (low_kinetic_run >= kHaltSamples && !rec.halted_at) rec.halted_at = t;
  };

  record_sample(0.0);
  for (long s = 1; s <= total_steps; ++s) {
    current = step(current, heads, kind, options.dt);
    if (s % options.sample_every == 0 || s == total_steps)
      record_sample(s * options.dt);
  }
  rec.final_configuration = std::move(current);
  return rec;
}

TokenConfiguration random_configuration(int n, int d, std::uint64_t seed, double beta) {
  if (n < 2 || d < 2) throw std::invalid_argument("random_configuration: need n >= 2, d >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec> tokens;
  tokens.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec t(d);
    double nrm = 0.0;
    do {
      for (double& c : t) c = gauss(rng);
      nrm = norm(t);
    } while (nrm <= kDegenerateNorm);
    for (double& c : t) c /= nrm;
    tokens.push_back(std::move(t));
  }
  return TokenConfiguration::from_unit_tokens(tokens, beta);
}

TokenConfiguration equiangular_configuration(int n, int d, double gamma0, double beta) {
  if (n < 2 || d < n)
    throw std::invalid_argument("equiangular_configuration: need n >= 2 and d >= n");
  const double lo = -1.0 / (n - 1);
  if (!(gamma0 > lo && gamma0 < 1.0))
    throw std::invalid_argument(
        "equiangular_configuration: gamma0 must lie in (-1/(n-1), 1)");

  // x_i = a u + b e_i with u = (1/sqrt(n)) sum e_k; solving <x_i,x_j> = gamma0
  // and ||x_i|| = 1 gives b = sqrt(1-gamma0) and the positive root below.
  const double b = std::sqrt(1.0 - gamma0);
  const double a = -b / std::sqrt(static_cast<double>(n)) +
                   std::sqrt(b * b / n + gamma0);

  std::vector<Vec> tokens;
  tokens.reserve(n);
  const double au = a / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    Vec t(d, 0.0);
    for (int k = 0; k < n; ++k) t[k] = au;
    t[i] += b;
    const double nrm = norm(t);
    for (double& c : t) c /= nrm;  // removes ~1e-16 construction rounding
    tokens.push_back(std::move(t));
  }
  return TokenConfiguration::from_unit_tokens(tokens, beta);
}

}  // namespace attnflow
