#include "attnflow/entropy.hpp"

#include <cmath>
#include <stdexcept>

#include "attnflow/errors.hpp"
#include "attnflow/geometry.hpp"

namespace attnflow {

namespace {

double weighted_mean(std::span<const double> p, std::span<const double> x) {
  double m = 0.0;
  for (size_t j = 0; j < p.size(); ++j) m += p[j] * x[j];
  return m;
}

double weighted_cov(std::span<const double> p, std::span<const double> x,
                    std::span<const double> y) {
  const double mx = weighted_mean(p, x);
  const double my = weighted_mean(p, y);
  double c = 0.0;
  for (size_t j = 0; j < p.size(); ++j) c += p[j] * x[j] * y[j];
  return c - mx * my;
}

void require_certified(std::span<const HeadSpec> heads, const char* where) {
  const ConditionFlags flags = check_conditions(heads);
  if (!flags.certified())
    throw NotCertifiedError(std::string(where) +
                            ": heads must satisfy symmetry, value alignment, orthogonality "
                            "and projection structure");
}

}  // namespace

EntropyReport entropy_report(const FlowState& state, const TokenConfiguration& cfg,
                             std::span<const HeadSpec> heads, const Vec& token_derivatives) {
  const int n = state.n, d = state.d, H = state.H;
  if (token_derivatives.size() != static_cast<size_t>(n) * d)
    throw std::invalid_argument("entropy_report: token_derivatives has wrong length");
  const double beta2 = cfg.beta() * cfg.beta();

  EntropyReport rep;
  rep.n = n;
  rep.H = H;
  const size_t nh = static_cast<size_t>(n) * H;
  rep.entropy.resize(nh);
  rep.scores.resize(nh);
  rep.score_velocity.resize(nh);
  rep.score_velocity_i.resize(nh);
  rep.score_velocity_ii.resize(nh);
  rep.covariance.resize(nh);
  rep.variance.resize(nh);
  rep.cross_shadow.resize(nh);
  rep.production_rate.resize(nh);

  Vec mx(d);
  for (int h = 0; h < H; ++h) {
    // M_h x_j and M_h xdot_j, reused across i.
    Vec cols(static_cast<size_t>(n) * d);
    for (int j = 0; j < n; ++j)
      matvec(heads[h].score, cfg.token(j), {&cols[static_cast<size_t>(j) * d], static_cast<size_t>(d)});

    for (int i = 0; i < n; ++i) {
      const size_t ih = static_cast<size_t>(i) * H + h;
      const auto p = state.attention_row(i, h);
      const auto s = state.score_row(i, h);
      const std::span<const double> xdot_i{&token_derivatives[static_cast<size_t>(i) * d],
                                           static_cast<size_t>(d)};

      rep.scores[ih].assign(s.begin(), s.end());
      Vec& v1 = rep.score_velocity_i[ih];
      Vec& v2 = rep.score_velocity_ii[ih];
      Vec& v = rep.score_velocity[ih];
      v1.resize(n);
      v2.resize(n);
      v.resize(n);

      matvec(heads[h].score, cfg.token(i), mx);
      for (int j = 0; j < n; ++j) {
        v1[j] = dot(xdot_i, {&cols[static_cast<size_t>(j) * d], static_cast<size_t>(d)});
        v2[j] = dot({mx.data(), mx.size()},
                    {&token_derivatives[static_cast<size_t>(j) * d], static_cast<size_t>(d)});
        v[j] = v1[j] + v2[j];
      }

      double ent = 0.0;
      for (int j = 0; j < n; ++j)
        if (p[j] > 0.0) ent -= p[j] * std::log(p[j]);
      rep.entropy[ih] = ent;
      rep.variance[ih] = weighted_cov(p, s, s);
      rep.covariance[ih] = weighted_cov(p, s, v);
      rep.cross_shadow[ih] = cross_shadow_sum(state, cfg, i, h);
      rep.production_rate[ih] = -beta2 * rep.covariance[ih];
    }
  }
  return rep;
}

double two_group_covariance(double lambda, double beta, double gamma, int n,
                            double gamma_dot) {
  if (n < 2) throw std::invalid_argument("two_group_covariance: need n >= 2");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("two_group_covariance: gamma must lie in (0, 1)");
  // Self weight of the two-point score distribution, written so the
  // exponential never overflows.
  const double p_self = 1.0 / (1.0 + (n - 1) * std::exp(-beta * lambda * (1.0 - gamma)));
  return -p_self * (1.0 - p_self) * lambda * (1.0 - gamma) * lambda * gamma_dot;
}

double cross_head_covariance(const FlowState& state, const TokenConfiguration& cfg,
                             std::span<const HeadSpec> heads, int token_index, int head_index) {
  require_certified(heads, "cross_head_covariance");
  const int n = state.n, d = state.d, H = state.H;
  if (token_index < 0 || token_index >= n || head_index < 0 || head_index >= H)
    throw std::invalid_argument("cross_head_covariance: index out of range");

  // Tangential velocity at token i contributed by the other heads.
  Vec xdot_other(d, 0.0);
  for (int h = 0; h < H; ++h) {
    if (h == head_index) continue;
    Vec t = project_tangent(cfg.token(token_index), state.aggregation(token_index, h));
    axpy(1.0 / n, t, xdot_other);
  }

  const auto p = state.attention_row(token_index, head_index);
  const auto s = state.score_row(token_index, head_index);
  Vec w(n);
  Vec mxj(d);
  for (int j = 0; j < n; ++j) {
    matvec(heads[head_index].score, cfg.token(j), mxj);
    w[j] = dot(xdot_other, mxj);
  }
  return weighted_cov(p, s, w);
}

ConditionEReport check_condition_E(const FlowState& state, const TokenConfiguration& cfg,
                                   std::span<const HeadSpec> heads, int token_index,
                                   int head_index) {
  require_certified(heads, "check_condition_E");
  const int n = state.n, d = state.d, H = state.H;
  if (token_index < 0 || token_index >= n || head_index < 0 || head_index >= H)
    throw std::invalid_argument("check_condition_E: index out of range");
  const int i = token_index, h = head_index;
  const double beta2 = cfg.beta() * cfg.beta();

  const auto p = state.attention_row(i, h);
  const auto s = state.score_row(i, h);

  // Single-head score velocity: the flow driven by head h alone, without the
  // 1/n velocity prefactor (the decomposition carries the 1/n explicitly).
  Vec mxi = matvec(heads[h].score, cfg.token(i));
  const Vec ti = project_tangent(cfg.token(i), state.aggregation(i, h));
  Vec single_i(n), single_ii(n), single(n);
  Vec mxj(d);
  for (int j = 0; j < n; ++j) {
    matvec(heads[h].score, cfg.token(j), mxj);
    single_i[j] = dot(ti, mxj);
    const Vec tj = project_tangent(cfg.token(j), state.aggregation(j, h));
    single_ii[j] = dot(mxi, tj);
    single[j] = single_i[j] + single_ii[j];
  }

  const double var = weighted_cov(p, s, s);
  const double shadow = cross_shadow_sum(state, cfg, i, h);

  // sum_{h' != h} Cov_p(s_j, a_j^{h'} s_j), the radial shadow taken at the
  // moving partner j.
  double cross_cov = 0.0;
  Vec asj(n);
  for (int h2 = 0; h2 < H; ++h2) {
    if (h2 == h) continue;
    for (int j = 0; j < n; ++j)
      asj[j] = radial_shadow(state, cfg, j, h2) * s[j];
    cross_cov += weighted_cov(p, s, asj);
  }

  ConditionEReport rep;
  rep.lhs = weighted_cov(p, s, single_ii);
  rep.rhs = shadow * var + cross_cov;
  rep.ok = rep.lhs >= rep.rhs - 1e-12;
  rep.term_single = -beta2 / n * weighted_cov(p, s, single);
  rep.term_shadow = beta2 * shadow / n * var;
  rep.term_cross = beta2 / n * cross_cov;
  return rep;
}

}  // namespace attnflow
