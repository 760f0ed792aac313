#include "attnflow/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "attnflow/errors.hpp"

namespace attnflow {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
// exp(x) overflows double above this.
const double kLogDoubleMax = std::log(std::numeric_limits<double>::max());
}  // namespace

const char* to_string(DynamicsKind kind) {
  switch (kind) {
    case DynamicsKind::flat: return "flat";
    case DynamicsKind::sphere: return "sphere";
    case DynamicsKind::normalized: return "normalized";
    case DynamicsKind::relu_sphere: return "relu_sphere";
  }
  return "?";
}

std::optional<DynamicsKind> dynamics_kind_from_string(std::string_view name) {
  if (name == "flat") return DynamicsKind::flat;
  if (name == "sphere") return DynamicsKind::sphere;
  if (name == "normalized") return DynamicsKind::normalized;
  if (name == "relu_sphere") return DynamicsKind::relu_sphere;
  return std::nullopt;
}

bool HeadSpec::value_aligned(double tol) const { return max_abs_diff(value, score) <= tol; }

void HeadSpec::validate() const {
  if (score.rows != score.cols) throw std::invalid_argument("HeadSpec: score matrix not square");
  if (value.rows != score.rows || value.cols != score.cols)
    throw std::invalid_argument("HeadSpec: value matrix shape differs from score matrix");
  if (scalar_strength) {
    const Matrix expect = Matrix::scaled_identity(score.rows, *scalar_strength);
    if (max_abs_diff(score, expect) > 1e-12)
      throw std::invalid_argument("HeadSpec: scalar_strength set but score != strength * I");
  }
}

HeadSpec HeadSpec::scalar(int d, double strength) {
  HeadSpec h;
  h.score = Matrix::scaled_identity(d, strength);
  h.value = h.score;
  h.scalar_strength = strength;
  return h;
}

HeadSpec HeadSpec::from_matrix(Matrix m) {
  HeadSpec h;
  h.score = std::move(m);
  h.value = h.score;
  h.validate();
  return h;
}

HeadSpec HeadSpec::with_value(Matrix score, Matrix value, double perturbation_norm) {
  HeadSpec h;
  h.score = std::move(score);
  h.value = std::move(value);
  h.value_perturbation_norm = perturbation_norm;
  h.validate();
  return h;
}

HeadSpec HeadSpec::coordinate_projection(int d, int begin, int end) {
  if (begin < 0 || end > d || begin >= end)
    throw std::invalid_argument("coordinate_projection: bad coordinate range");
  Matrix m(d, d);
  for (int i = begin; i < end; ++i) m(i, i) = 1.0;
  return from_matrix(std::move(m));
}

TokenConfiguration::TokenConfiguration(int n, int d, Vec x, double beta)
    : n_(n), d_(d), beta_(beta), x_(std::move(x)) {
  if (n_ < 1 || d_ < 1) throw std::invalid_argument("TokenConfiguration: need n >= 1, d >= 1");
  if (beta_ <= 0.0) throw std::invalid_argument("TokenConfiguration: beta must be positive");
  if (x_.size() != static_cast<size_t>(n_) * d_)
    throw std::invalid_argument("TokenConfiguration: token buffer size mismatch");
}

TokenConfiguration TokenConfiguration::from_unit_tokens(const std::vector<Vec>& tokens,
                                                        double beta) {
  if (tokens.empty()) throw std::invalid_argument("from_unit_tokens: no tokens");
  const int d = static_cast<int>(tokens.front().size());
  Vec flat;
  flat.reserve(tokens.size() * d);
  for (const Vec& t : tokens) {
    if (static_cast<int>(t.size()) != d)
      throw std::invalid_argument("from_unit_tokens: inconsistent token dimensions");
    if (std::abs(norm(t) - 1.0) > kIdentityTol)
      throw std::invalid_argument("from_unit_tokens: token norm deviates from 1");
    flat.insert(flat.end(), t.begin(), t.end());
  }
  return TokenConfiguration(static_cast<int>(tokens.size()), d, std::move(flat), beta);
}

TokenConfiguration TokenConfiguration::from_points(int n, int d, Vec flat, double beta) {
  return TokenConfiguration(n, d, std::move(flat), beta);
}

double TokenConfiguration::mean_alignment() const {
  if (n_ < 2) return 1.0;
  double s = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = i + 1; j < n_; ++j) s += alignment(i, j);
  return s / (0.5 * n_ * (n_ - 1));
}

double TokenConfiguration::max_unit_norm_error() const {
  double e = 0.0;
  for (int i = 0; i < n_; ++i) e = std::max(e, std::abs(norm(token(i)) - 1.0));
  return e;
}

FlowState::FlowState(int n_, int d_, int H_) : n(n_), d(d_), H(H_) {
  const size_t nh = static_cast<size_t>(n) * H;
  aggregations.assign(nh * d, 0.0);
  unweighted.assign(nh * d, 0.0);
  mean_aggregations.assign(nh * d, 0.0);
  mean_unweighted.assign(nh * d, 0.0);
  velocities.assign(static_cast<size_t>(n) * d, 0.0);
  normalized_velocities.assign(static_cast<size_t>(n) * d, 0.0);
  scores.assign(nh * n, 0.0);
  attention.assign(nh * n, 0.0);
  partition.assign(nh, 0.0);
  log_partition.assign(nh, 0.0);
  partition_total.assign(n, 0.0);
  overflow.assign(nh, 0);
}

bool FlowState::any_overflow() const {
  return std::any_of(overflow.begin(), overflow.end(), [](std::uint8_t f) { return f != 0; });
}

namespace {

void validate_heads(const TokenConfiguration& cfg, std::span<const HeadSpec> heads) {
  if (heads.empty()) throw std::invalid_argument("attention: head list is empty");
  for (const HeadSpec& h : heads) {
    h.validate();
    if (h.dim() != cfg.dim())
      throw std::invalid_argument("attention: head dimension differs from token dimension");
  }
}

// One token row of the flow state. Sums over j and h ascend, which pins the
// floating-point result independently of the thread count.
void flow_state_row(const TokenConfiguration& cfg, int H, const Vec& score_cols,
                    const Vec& value_cols, int i, FlowState& st) {
  const int n = st.n, d = st.d;
  const double beta = cfg.beta();
  const auto xi = cfg.token(i);

  Vec weights(n);
  for (int h = 0; h < H; ++h) {
    const size_t ih = static_cast<size_t>(i) * H + h;
    double* s = &st.scores[ih * n];
    double* p = &st.attention[ih * n];
    double* mean_f = &st.mean_aggregations[ih * d];
    double* mean_g = &st.mean_unweighted[ih * d];
    double* f = &st.aggregations[ih * d];
    double* g = &st.unweighted[ih * d];

    const double* cols = &score_cols[(static_cast<size_t>(h) * n) * d];
    double smax = -kInf;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* col = cols + static_cast<size_t>(j) * d;
      for (int k = 0; k < d; ++k) acc += xi[k] * col[k];
      s[j] = acc;
      smax = std::max(smax, acc);
    }

    // Shifted exponentials keep the row finite at any beta; the reported
    // Z recovers the unshifted value whenever it is representable.
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      weights[j] = std::exp(beta * (s[j] - smax));
      sum += weights[j];
    }
    const double log_z = beta * smax + std::log(sum);
    const bool ovf = log_z >= kLogDoubleMax;
    st.log_partition[ih] = log_z;
    st.overflow[ih] = ovf ? 1 : 0;
    const double z = ovf ? kInf : std::exp(log_z);
    st.partition[ih] = z;

    const double* vcols = &value_cols[(static_cast<size_t>(h) * n) * d];
    for (int j = 0; j < n; ++j) {
      p[j] = weights[j] / sum;
      const double* vcol = vcols + static_cast<size_t>(j) * d;
      const double* xj = cfg.token(j).data();
      for (int k = 0; k < d; ++k) {
        mean_f[k] += p[j] * vcol[k];
        mean_g[k] += p[j] * xj[k];
      }
    }
    for (int k = 0; k < d; ++k) {
      if (ovf) {
        f[k] = mean_f[k] == 0.0 ? 0.0 : std::copysign(kInf, mean_f[k]);
        g[k] = mean_g[k] == 0.0 ? 0.0 : std::copysign(kInf, mean_g[k]);
      } else {
        f[k] = z * mean_f[k];
        g[k] = z * mean_g[k];
      }
    }
  }

  double* v = &st.velocities[static_cast<size_t>(i) * d];
  for (int h = 0; h < H; ++h) {
    const double* f = &st.aggregations[(static_cast<size_t>(i) * H + h) * d];
    for (int k = 0; k < d; ++k) v[k] += f[k];
  }
  for (int k = 0; k < d; ++k) v[k] /= n;

  double z_total = 0.0;
  for (int h = 0; h < H; ++h) z_total += st.partition[static_cast<size_t>(i) * H + h];
  st.partition_total[i] = z_total;

  // sum_h f_i^h / sum_h Z_i^h, assembled from bounded attention means so it
  // stays finite at large beta.
  const double lse = log_sum_exp({&st.log_partition[static_cast<size_t>(i) * H],
                                  static_cast<size_t>(H)});
  double* u = &st.normalized_velocities[static_cast<size_t>(i) * d];
  for (int h = 0; h < H; ++h) {
    const double w = std::exp(st.log_partition[static_cast<size_t>(i) * H + h] - lse);
    const double* mf = &st.mean_aggregations[(static_cast<size_t>(i) * H + h) * d];
    for (int k = 0; k < d; ++k) u[k] += w * mf[k];
  }
}

// M_h x_j and W_h x_j for all (h, j), laid out [h][j][k].
void project_tokens(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                    Vec& score_cols, Vec& value_cols) {
  const int n = cfg.count(), d = cfg.dim();
  const int H = static_cast<int>(heads.size());
  score_cols.assign(static_cast<size_t>(H) * n * d, 0.0);
  value_cols.assign(static_cast<size_t>(H) * n * d, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
  for (int h = 0; h < H; ++h)
    for (int j = 0; j < n; ++j) {
      const size_t off = (static_cast<size_t>(h) * n + j) * d;
      matvec(heads[h].score, cfg.token(j), {&score_cols[off], static_cast<size_t>(d)});
      matvec(heads[h].value, cfg.token(j), {&value_cols[off], static_cast<size_t>(d)});
    }
}

}  // namespace

FlowState compute_flow_state(const TokenConfiguration& cfg, std::span<const HeadSpec> heads) {
  validate_heads(cfg, heads);
  const int n = cfg.count();
  const int H = static_cast<int>(heads.size());
  FlowState st(n, cfg.dim(), H);

  Vec score_cols, value_cols;
  project_tokens(cfg, heads, score_cols, value_cols);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) flow_state_row(cfg, H, score_cols, value_cols, i, st);
  return st;
}

FlowState compute_flow_state_reference(const TokenConfiguration& cfg,
                                       std::span<const HeadSpec> heads) {
  validate_heads(cfg, heads);
  const int n = cfg.count(), d = cfg.dim();
  const int H = static_cast<int>(heads.size());
  const double beta = cfg.beta();
  FlowState st(n, d, H);

  for (int i = 0; i < n; ++i) {
    for (int h = 0; h < H; ++h) {
      const size_t ih = static_cast<size_t>(i) * H + h;
      double z = 0.0;
      for (int j = 0; j < n; ++j) {
        const Vec mx = matvec(heads[h].score, cfg.token(j));
        const Vec wx = matvec(heads[h].value, cfg.token(j));
        const double s = dot(cfg.token(i), mx);
        const double w = std::exp(beta * s);
        st.scores[ih * n + j] = s;
        z += w;
        for (int k = 0; k < d; ++k) {
          st.aggregations[ih * d + k] += w * wx[k];
          st.unweighted[ih * d + k] += w * cfg.token(j)[k];
        }
      }
      st.partition[ih] = z;
      st.log_partition[ih] = std::log(z);
      st.overflow[ih] = std::isfinite(z) ? 0 : 1;
      for (int j = 0; j < n; ++j)
        st.attention[ih * n + j] = std::exp(beta * st.scores[ih * n + j]) / z;
      for (int k = 0; k < d; ++k) {
        st.mean_aggregations[ih * d + k] = st.aggregations[ih * d + k] / z;
        st.mean_unweighted[ih * d + k] = st.unweighted[ih * d + k] / z;
      }
    }
    double z_total = 0.0;
    for (int h = 0; h < H; ++h) z_total += st.partition[static_cast<size_t>(i) * H + h];
    st.partition_total[i] = z_total;
    for (int h = 0; h < H; ++h)
      for (int k = 0; k < d; ++k) {
        const double fk = st.aggregations[(static_cast<size_t>(i) * H + h) * d + k];
        st.velocities[static_cast<size_t>(i) * d + k] += fk / n;
        st.normalized_velocities[static_cast<size_t>(i) * d + k] += fk / z_total;
      }
  }
  return st;
}

Vec token_derivatives(const FlowState& state, const TokenConfiguration& cfg,
                      DynamicsKind kind) {
  const int n = state.n, d = state.d;
  Vec out(static_cast<size_t>(n) * d);
  switch (kind) {
    case DynamicsKind::flat:
      std::copy(state.velocities.begin(), state.velocities.end(), out.begin());
      break;
    case DynamicsKind::sphere:
      for (int i = 0; i < n; ++i) {
        auto v = state.velocity(i);
        std::copy(v.begin(), v.end(), out.begin() + static_cast<size_t>(i) * d);
        project_tangent_inplace(cfg.token(i), {&out[static_cast<size_t>(i) * d], static_cast<size_t>(d)});
      }
      break;
    case DynamicsKind::normalized:
      for (int i = 0; i < n; ++i) {
        auto u = state.normalized_velocity(i);
        std::copy(u.begin(), u.end(), out.begin() + static_cast<size_t>(i) * d);
        project_tangent_inplace(cfg.token(i), {&out[static_cast<size_t>(i) * d], static_cast<size_t>(d)});
      }
      break;
    case DynamicsKind::relu_sphere:
      throw std::invalid_argument(
          "token_derivatives: relu_sphere needs the head list (FlowState carries softmax data)");
  }
  return out;
}

Vec token_derivatives(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                      DynamicsKind kind) {
  if (kind != DynamicsKind::relu_sphere) {
    const FlowState st = compute_flow_state(cfg, heads);
    return token_derivatives(st, cfg, kind);
  }

  validate_heads(cfg, heads);
  const int n = cfg.count(), d = cfg.dim();
  const int H = static_cast<int>(heads.size());
  Vec out(static_cast<size_t>(n) * d, 0.0);

  Vec score_cols, value_cols;
  project_tokens(cfg, heads, score_cols, value_cols);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto xi = cfg.token(i);
    double* v = &out[static_cast<size_t>(i) * d];
    for (int h = 0; h < H; ++h) {
      const double* cols = &score_cols[(static_cast<size_t>(h) * n) * d];
      const double* vcols = &value_cols[(static_cast<size_t>(h) * n) * d];
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        const double* col = cols + static_cast<size_t>(j) * d;
        for (int k = 0; k < d; ++k) s += xi[k] * col[k];
        const double w = std::max(0.0, s);
        if (w == 0.0) continue;
        const double* vcol = vcols + static_cast<size_t>(j) * d;
        for (int k = 0; k < d; ++k) v[k] += w * vcol[k];
      }
    }
    for (int k = 0; k < d; ++k) v[k] /= n;
    project_tangent_inplace(xi, {v, static_cast<size_t>(d)});
  }
  return out;
}

ConditionFlags check_conditions(std::span<const HeadSpec> heads, double tolerance) {
  if (heads.empty()) throw std::invalid_argument("check_conditions: head list is empty");
  const int H = static_cast<int>(heads.size());
  ConditionFlags flags;
  flags.tolerance = tolerance;
  flags.score_symmetric.assign(H, 0);
  flags.value_aligned.assign(H, 0);
  flags.projection.assign(H, 0);
  flags.orthogonal_pair.assign(static_cast<size_t>(H) * H, 1);
  flags.pair_delta.assign(static_cast<size_t>(H) * H, 0.0);

  flags.all_symmetric = flags.all_value_aligned = flags.all_projection = true;
  for (int h = 0; h < H; ++h) {
    const Matrix& m = heads[h].score;
    const bool sym = max_abs_diff(m, m.transposed()) <= tolerance;
    const bool val = max_abs_diff(heads[h].value, m) <= tolerance;
    const bool proj = max_abs_diff(m * m, m) <= tolerance;
    flags.score_symmetric[h] = sym;
    flags.value_aligned[h] = val;
    flags.projection[h] = proj;
    flags.all_symmetric &= sym;
    flags.all_value_aligned &= val;
    flags.all_projection &= proj;
  }

  flags.all_orthogonal = true;
  for (int h1 = 0; h1 < H; ++h1)
    for (int h2 = 0; h2 < H; ++h2) {
      if (h1 == h2) continue;
      const double delta = operator_norm(heads[h1].score * heads[h2].score);
      flags.pair_delta[static_cast<size_t>(h1) * H + h2] = delta;
      flags.max_delta = std::max(flags.max_delta, delta);
      const bool ok = delta <= tolerance;
      flags.orthogonal_pair[static_cast<size_t>(h1) * H + h2] = ok;
      flags.all_orthogonal &= ok;
    }
  return flags;
}

double radial_shadow(const FlowState& state, const TokenConfiguration& cfg, int i, int h) {
  return dot(state.aggregation(i, h), cfg.token(i));
}

double cross_shadow_sum(const FlowState& state, const TokenConfiguration& cfg, int i, int h) {
  double a = 0.0;
  for (int h2 = 0; h2 < state.H; ++h2)
    if (h2 != h) a += radial_shadow(state, cfg, i, h2);
  return a;
}

RadialDominanceReport check_radial_dominance(const FlowState& state,
                                             const TokenConfiguration& cfg) {
  const int n = state.n, H = state.H;
  RadialDominanceReport rep;
  rep.n = n;
  rep.H = H;
  rep.margin.assign(static_cast<size_t>(n) * H, 0.0);
  rep.ok.assign(static_cast<size_t>(n) * H, 1);
  rep.min_margin = std::numeric_limits<double>::infinity();

  for (int i = 0; i < n; ++i) {
    Vec abs_radial(H);
    for (int h = 0; h < H; ++h)
      abs_radial[h] = std::abs(radial_shadow(state, cfg, i, h));
    for (int h = 0; h < H; ++h) {
      const RadialTangential rt = decompose(cfg.token(i), state.aggregation(i, h));
      const double fnorm = norm(state.aggregation(i, h));
      double m = 0.0;
      if (fnorm >= kDegenerateNorm) {
        double others = 0.0;
        for (int h2 = 0; h2 < H; ++h2)
          if (h2 != h) others += abs_radial[h2];
        m = rt.tangential_norm * rt.tangential_norm / fnorm - others;
      }
      rep.margin[static_cast<size_t>(i) * H + h] = m;
      rep.ok[static_cast<size_t>(i) * H + h] = m >= 0.0 ? 1 : 0;
      rep.min_margin = std::min(rep.min_margin, m);
      rep.all_ok &= m >= 0.0;
    }
  }
  return rep;
}

}  // namespace attnflow
