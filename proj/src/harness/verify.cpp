#include "attnflow/harness/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "attnflow/dynamics.hpp"
#include "attnflow/energy.hpp"
#include "attnflow/entropy.hpp"
#include "attnflow/equiangular.hpp"
#include "attnflow/harness/experiment.hpp"
#include "attnflow/thresholds.hpp"

namespace attnflow::harness {

namespace {

constexpr double kFdStep = 1e-5;    // central-difference step on the flow map
constexpr double kFdSubStep = 1e-7; // integrator sub-step inside the oracle

Vec random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(d);
  double nrm = 0.0;
  do {
    for (double& c : v) c = gauss(rng);
    nrm = norm(v);
  } while (nrm < 1e-8);
  for (double& c : v) c /= nrm;
  return v;
}

Vec random_vec(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Vec v(d);
  for (double& c : v) c = gauss(rng);
  return v;
}

// Random symmetric score matrix scaled to unit operator norm.
HeadSpec random_symmetric_head(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      const double v = gauss(rng);
      m(i, j) = v;
      m(j, i) = v;
    }
  const double s = operator_norm(m);
  return HeadSpec::from_matrix(1.0 / s * m);
}

std::vector<HeadSpec> block_projection_heads(int d, int count) {
  std::vector<HeadSpec> heads;
  for (int h = 0; h < count; ++h)
    heads.push_back(HeadSpec::coordinate_projection(d, h * d / count, (h + 1) * d / count));
  return heads;
}

double fd_total_energy_rate(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                            DynamicsKind kind) {
  const TokenConfiguration plus = advance(cfg, heads, kind, kFdStep, kFdSubStep);
  const TokenConfiguration minus = advance(cfg, heads, kind, -kFdStep, kFdSubStep);
  return (total_energy(plus, heads) - total_energy(minus, heads)) / (2.0 * kFdStep);
}

double fd_per_head_energy_rate(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                               int h, DynamicsKind kind) {
  const TokenConfiguration plus = advance(cfg, heads, kind, kFdStep, kFdSubStep);
  const TokenConfiguration minus = advance(cfg, heads, kind, -kFdStep, kFdSubStep);
  return (per_head_energy(plus, heads[h]).value - per_head_energy(minus, heads[h]).value) /
         (2.0 * kFdStep);
}

struct Collector {
  VerificationReport report;

  void add(const std::string& name, const std::string& detail, double residual,
           double tolerance) {
    VerificationCheck c{name, detail, residual, tolerance, residual <= tolerance};
    if (c.pass)
      ++report.passed;
    else
      ++report.failed;
    if (residual > report.worst_residual) {
      report.worst_residual = residual;
      report.worst_check = name;
    }
    report.checks.push_back(std::move(c));
  }
};

}  // namespace

VerificationReport verify_all(std::uint64_t seed, const VerifySizes& sizes) {
  Collector out;
  std::mt19937_64 rng(seed);
  const int n = sizes.n, d = sizes.d, H = sizes.head_count;

  // --- projection identities -------------------------------------------
  {
    double rk = 0, rsa = 0, ridem = 0, rpyth = 0;
    for (int t = 0; t < sizes.trials; ++t) {
      for (int dim : {2, 3, 8, 50}) {
        const Vec x = random_unit(rng, dim);
        const Vec u = random_vec(rng, dim, 2.0);
        const Vec w = random_vec(rng, dim, 2.0);
        const Vec pu = project_tangent(x, u);
        rk = std::max(rk, std::abs(dot(pu, u) - dot(pu, pu)));
        rsa = std::max(rsa, std::abs(dot(pu, w) - dot(u, project_tangent(x, w))));
        const Vec ppu = project_tangent(x, pu);
        double dd = 0;
        for (size_t k = 0; k < pu.size(); ++k) dd = std::max(dd, std::abs(ppu[k] - pu[k]));
        ridem = std::max(ridem, dd);
        const RadialTangential rt = decompose(x, u);
        rpyth = std::max(rpyth, std::abs(rt.radial * rt.radial +
                                         rt.tangential_norm * rt.tangential_norm -
                                         dot(u, u)));
      }
    }
    out.add("identity_k", "self-pairing <P(u),u> = ||P(u)||^2", rk, 1e-12);
    out.add("identity_sa", "projection symmetry <P(u),w> = <u,P(w)>", rsa, 1e-12);
    out.add("projection_idempotent", "P(P(v)) = P(v)", ridem, 1e-12);
    out.add("pythagoras", "radial^2 + tangential^2 = ||f||^2", rpyth, 1e-10);
  }

  // --- flow-state structure --------------------------------------------
  std::vector<HeadSpec> sym_heads;
  for (int h = 0; h < H; ++h) sym_heads.push_back(random_symmetric_head(rng, d));
  {
    double rrows = 0, rvel = 0;
    for (int t = 0; t < std::min(sizes.trials, 8); ++t) {
      const TokenConfiguration cfg = random_configuration(n, d, seed + 100 + t);
      const FlowState st = compute_flow_state(cfg, sym_heads);
      for (int i = 0; i < n; ++i) {
        Vec vsum(d, 0.0);
        for (int h = 0; h < H; ++h) {
          double s = 0;
          for (double p : st.attention_row(i, h)) s += p;
          rrows = std::max(rrows, std::abs(s - 1.0));
          axpy(1.0 / n, st.aggregation(i, h), vsum);
        }
        for (int k = 0; k < d; ++k)
          rvel = std::max(rvel, std::abs(vsum[k] - st.velocity(i)[k]));
      }
    }
    out.add("attention_rows", "attention rows sum to one", rrows, 1e-12);
    out.add("velocity_consistency", "v_i = (1/n) sum_h f_i^h", rvel, 1e-12);
  }

  // --- energy rate oracles ----------------------------------------------
  {
    const int fd_trials = std::min(sizes.trials, 5);
    double rflat = 0, rsphere = 0, rnorm = 0, rgen = 0, rmono = 0, rsum = 0;
    for (int t = 0; t < fd_trials; ++t) {
      const TokenConfiguration cfg = random_configuration(n, d, seed + 200 + t);
      const FlowState st = compute_flow_state(cfg, sym_heads);
      const double aflat = total_energy_rate(st, cfg, DynamicsKind::flat);
      const double asph = total_energy_rate(st, cfg, DynamicsKind::sphere);
      const double anorm = total_energy_rate(st, cfg, DynamicsKind::normalized);
      rflat = std::max(rflat, std::abs(aflat - fd_total_energy_rate(cfg, sym_heads, DynamicsKind::flat)));
      rsphere = std::max(rsphere, std::abs(asph - fd_total_energy_rate(cfg, sym_heads, DynamicsKind::sphere)));
      rnorm = std::max(rnorm, std::abs(anorm - fd_total_energy_rate(cfg, sym_heads, DynamicsKind::normalized)));
      rmono = std::max(rmono, asph - aflat);
      for (DynamicsKind kind : {DynamicsKind::flat, DynamicsKind::sphere}) {
        double sum = 0;
        for (int h = 0; h < H; ++h) {
          const PerHeadRate pr = per_head_rate(st, cfg, sym_heads, h, kind);
          rgen = std::max(rgen, std::abs(pr.generic - fd_per_head_energy_rate(cfg, sym_heads, h, kind)));
          sum += pr.generic;
        }
        rsum = std::max(rsum, std::abs(sum - total_energy_rate(st, cfg, kind)));
      }
    }
    out.add("rate_flat_fd", "flat total rate vs central difference", rflat, 1e-6);
    out.add("rate_sphere_fd", "sphere total rate vs central difference", rsphere, 1e-6);
    out.add("rate_normalized_fd", "partition-weighted rate vs central difference", rnorm, 1e-6);
    out.add("per_head_generic_fd", "generic per-head rate vs central difference", rgen, 1e-6);
    out.add("sphere_not_faster", "sphere rate <= flat rate", std::max(0.0, rmono), 1e-12);
    out.add("rate_sum", "per-head rates sum to the total rate", rsum, 1e-9);
  }

  // --- certified per-head decomposition ---------------------------------
  {
    const std::vector<HeadSpec> proj = block_projection_heads(d, 2);
    double rdec = 0;
    for (int t = 0; t < std::min(sizes.trials, 3); ++t) {
      const TokenConfiguration cfg = random_configuration(n, d, seed + 300 + t);
      const FlowState st = compute_flow_state(cfg, proj);
      for (int h = 0; h < 2; ++h)
        for (DynamicsKind kind : {DynamicsKind::flat, DynamicsKind::sphere}) {
          const PerHeadRate pr = per_head_rate(st, cfg, proj, h, kind);
          if (!pr.certified) {
            rdec = 1.0;
            continue;
          }
          rdec = std::max(rdec, std::abs(pr.closed_form -
                                         fd_per_head_energy_rate(cfg, proj, h, kind)));
        }
    }
    out.add("per_head_decomposition",
            "certified tangential/shadow split vs central difference", rdec, 1e-6);
  }

  // --- closed-form thresholds -------------------------------------------
  {
    out.add("critical_alignment_h2", "positive quadratic root at two heads",
            std::abs(critical_alignment(2) - 0.61803398874989484820), 1e-10);
    out.add("critical_alignment_h3", "positive quadratic root at three heads",
            std::abs(critical_alignment(3) - (std::sqrt(2.0) - 1.0)), 1e-10);
    double rq = 0;
    for (int h = 1; h <= 64; ++h) {
      const double c = critical_alignment(h);
      rq = std::max(rq, std::abs(c * c + (h - 1) * c - 1.0));
    }
    out.add("critical_alignment_quadratic", "root residual for 1..64 heads", rq, 1e-14);

    double rw = 0;
    for (double z : {-1.0 / std::exp(1.0) + 1e-6, -0.3, -0.1, -0.01, 0.0, 1e-8, 1e-4, 0.5,
                     1.0, std::exp(1.0), 10.0, 1e3, 1e6})
      rw = std::max(rw, std::abs(lambert_w0(z) * std::exp(lambert_w0(z)) - z) /
                            std::max(1.0, std::abs(z)));
    out.add("lambert_roundtrip", "W(z) e^{W(z)} = z over the principal branch", rw, 1e-13);

    double rs = 0, ri = 0, rorder = 0;
    for (int nn : {4, 8, 32}) {
      for (double beta : {0.5, 1.0, 2.0}) {
        const double ls = optimal_strength(beta, nn);
        rs = std::max(rs, std::abs((1.0 - ls * beta) * std::exp(ls * beta) + (nn - 1)));
        const double lc = inflection_strength(beta, nn);
        ri = std::max(ri, std::abs(rate_function(lc, beta, nn).second));
        rorder = std::max(rorder, ls - lc);  // must be negative: lambda_c > lambda*
      }
    }
    out.add("optimal_strength_stationarity", "phi'(lambda*) = 0", rs, 1e-10);
    out.add("inflection_residual", "phi''(lambda_c) = 0", ri, 1e-10);
    out.add("inflection_above_optimum", "lambda_c exceeds lambda*", std::max(0.0, rorder), 0.0);
  }

  // --- radial dominance flip at the critical temperature -----------------
  {
    const double beta_star = critical_beta(1.0, 2, 8);
    auto min_margin_at = [&](double beta) {
      const TokenConfiguration cfg = equiangular_configuration(8, 8, 0.0, beta);
      std::vector<HeadSpec> heads{HeadSpec::scalar(8, 1.0), HeadSpec::scalar(8, 1.0)};
      const FlowState st = compute_flow_state(cfg, heads);
      return check_radial_dominance(st, cfg).min_margin;
    };
    const double lo = min_margin_at(beta_star * (1.0 - 1e-3));
    const double hi = min_margin_at(beta_star * (1.0 + 1e-3));
    out.add("tau_flip_at_beta_star",
            "radial dominance holds below and fails above the critical temperature",
            std::max(0.0, -lo) + std::max(0.0, hi), 0.0);
  }

  // --- reduction consistency and late-time rate --------------------------
  {
    const TokenConfiguration cfg = equiangular_configuration(8, 8, 0.05);
    std::vector<HeadSpec> head{HeadSpec::scalar(8, 1.0)};
    IntegrateOptions opt;
    opt.dt = 1e-3;
    opt.t_end = 5.0;
    opt.sample_every = 10;
    const TrajectoryRecord rec = integrate(cfg, head, DynamicsKind::normalized, opt);
    ReducedSpec rs;
    rs.lambdas = {1.0};
    rs.beta = 1.0;
    rs.n = 8;
    const ReducedSeries red = integrate_reduced(0.05, rs, 1e-3, 5.0);
    double rsup = 0;
    for (size_t k = 0; k < rec.times.size(); ++k) {
      const size_t idx = static_cast<size_t>(std::lround(rec.times[k] / 1e-3));
      rsup = std::max(rsup, std::abs(rec.mean_alignment[k] - red.gamma[idx]));
    }
    out.add("reduction_consistency",
            "full normalized flow tracks the scalar alignment equation", rsup, 1e-4);

    ReducedSpec two;
    two.lambdas = {0.5, 1.5};
    two.beta = 1.0;
    two.n = 8;
    const ReducedSeries late = integrate_reduced(0.8, two, 1e-3, 6.0);
    const double slope = fit_late_time_rate(late);
    out.add("late_time_rate", "log-epsilon slope equals minus twice the total strength",
            std::abs(slope + 4.0) / 4.0, 0.05);
  }

  // --- entropy production ------------------------------------------------
  {
    double rent = 0;
    for (int t = 0; t < std::min(sizes.trials, 5); ++t) {
      const TokenConfiguration cfg = random_configuration(n, d, seed + 400 + t);
      const FlowState st = compute_flow_state(cfg, sym_heads);
      const Vec xdot = token_derivatives(st, cfg, DynamicsKind::sphere);
      const EntropyReport er = entropy_report(st, cfg, sym_heads, xdot);
      const TokenConfiguration plus = advance(cfg, sym_heads, DynamicsKind::sphere, kFdStep, kFdSubStep);
      const TokenConfiguration minus = advance(cfg, sym_heads, DynamicsKind::sphere, -kFdStep, kFdSubStep);
      const FlowState stp = compute_flow_state(plus, sym_heads);
      const FlowState stm = compute_flow_state(minus, sym_heads);
      const Vec xdp = token_derivatives(stp, plus, DynamicsKind::sphere);
      const Vec xdm = token_derivatives(stm, minus, DynamicsKind::sphere);
      const EntropyReport erp = entropy_report(stp, plus, sym_heads, xdp);
      const EntropyReport erm = entropy_report(stm, minus, sym_heads, xdm);
      for (int i = 0; i < n; ++i)
        for (int h = 0; h < H; ++h) {
          const double fd = (erp.entropy_at(i, h) - erm.entropy_at(i, h)) / (2.0 * kFdStep);
          rent = std::max(rent, std::abs(fd - er.production_at(i, h)));
        }
    }
    out.add("entropy_identity", "dH/dt equals -beta^2 Cov(s, sdot)", rent, 1e-8);

    // Cross-head covariance law on certified projections.
    const std::vector<HeadSpec> proj = block_projection_heads(d, 2);
    const TokenConfiguration cfg = random_configuration(n, d, seed + 500);
    const FlowState st = compute_flow_state(cfg, proj);
    const EntropyReport er = entropy_report(st, cfg, proj,
                                            token_derivatives(st, cfg, DynamicsKind::sphere));
    double rlem = 0;
    for (int i = 0; i < n; ++i)
      for (int h = 0; h < 2; ++h) {
        const double measured = cross_head_covariance(st, cfg, proj, i, h);
        const double predicted = -er.cross_shadow[static_cast<size_t>(i) * 2 + h] / n *
                                 er.variance[static_cast<size_t>(i) * 2 + h];
        rlem = std::max(rlem, std::abs(measured - predicted));
      }
    out.add("crosscov_lemma", "cross-head covariance equals -(A/n) Var(s)", rlem, 1e-9);

    // Two-group closed form on an equiangular scalar state.
    const TokenConfiguration eq = equiangular_configuration(8, 8, 0.3, 0.9);
    std::vector<HeadSpec> scalar{HeadSpec::scalar(8, 1.3)};
    const FlowState eqst = compute_flow_state(eq, scalar);
    const Vec eqdot = token_derivatives(eqst, eq, DynamicsKind::sphere);
    const EntropyReport eqer = entropy_report(eqst, eq, scalar, eqdot);
    const double gamma_dot =
        2.0 * dot({&eqdot[0], static_cast<size_t>(eq.dim())}, eq.token(1));
    const double closed = two_group_covariance(1.3, 0.9, 0.3, 8, gamma_dot);
    out.add("two_group_covariance", "closed form matches the measured covariance",
            std::abs(closed - eqer.covariance_at(0, 0)), 1e-10);
  }

  // --- integrator properties ---------------------------------------------
  {
    const TokenConfiguration cfg = equiangular_configuration(8, 8, 0.3);
    std::vector<HeadSpec> head{HeadSpec::scalar(8, 1.0)};
    TokenConfiguration cur = cfg;
    double drift = 0, spread = 0;
    for (int s = 0; s < 200; ++s) {
      cur = step(cur, head, DynamicsKind::sphere, 1e-2);
      drift = std::max(drift, cur.max_unit_norm_error());
    }
    double lo = 2.0, hi = -2.0;
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j) {
        lo = std::min(lo, cur.alignment(i, j));
        hi = std::max(hi, cur.alignment(i, j));
      }
    spread = hi - lo;
    out.add("sphere_drift", "tokens stay on the sphere along the flow", drift, 1e-12);
    out.add("equiangular_preservation", "equiangular structure is preserved", spread, 1e-8);

    auto gamma_at = [&](double dt_run) {
      TokenConfiguration c = cfg;
      const long steps = std::lround(1.0 / dt_run);
      for (long s = 0; s < steps; ++s) c = step(c, head, DynamicsKind::sphere, dt_run);
      return c.mean_alignment();
    };
    const double ref = gamma_at(0.02 / 16.0);
    const double e1 = std::abs(gamma_at(0.02) - ref);
    const double e2 = std::abs(gamma_at(0.01) - ref);
    const double order = std::log2(e1 / e2);
    out.add("rk4_order", "observed convergence order of the integrator",
            std::max(0.0, 4.0 - order), 0.15);
  }

  // --- scenario determinism ----------------------------------------------
  {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / ("attnflow_verify_" + std::to_string(seed));
    double mismatch = 0.0;
    for (int run = 0; run < 2; ++run) {
      ExperimentSpec spec = default_spec(Scenario::convergence);
      spec.out_dir = (base / std::to_string(run)).string();
      run_scenario(spec);
    }
    for (const auto& entry : fs::directory_iterator(base / "0")) {
      std::ifstream a(entry.path(), std::ios::binary);
      std::ifstream b(base / "1" / entry.path().filename(), std::ios::binary);
      std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
      std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
      if (sa != sb || sa.empty()) mismatch = 1.0;
    }
    fs::remove_all(base);
    out.add("determinism", "identical spec and seed produce byte-identical outputs",
            mismatch, 0.0);
  }

  return out.report;
}

void to_json(nlohmann::json& j, const VerificationReport& report) {
  nlohmann::json checks = nlohmann::json::array();
  for (const VerificationCheck& c : report.checks)
    checks.push_back({{"name", c.name},
                      {"detail", c.detail},
                      {"residual", c.residual},
                      {"tolerance", c.tolerance},
                      {"pass", c.pass}});
  j = nlohmann::json{{"checks", checks},
                     {"passed", report.passed},
                     {"failed", report.failed},
                     {"worst_residual", report.worst_residual},
                     {"worst_check", report.worst_check}};
}

VerificationReport verification_report_from_json(const nlohmann::json& j) {
  VerificationReport r;
  for (const auto& c : j.at("checks")) {
    VerificationCheck vc;
    c.at("name").get_to(vc.name);
    c.at("detail").get_to(vc.detail);
    c.at("residual").get_to(vc.residual);
    c.at("tolerance").get_to(vc.tolerance);
    c.at("pass").get_to(vc.pass);
    r.checks.push_back(std::move(vc));
  }
  j.at("passed").get_to(r.passed);
  j.at("failed").get_to(r.failed);
  j.at("worst_residual").get_to(r.worst_residual);
  j.at("worst_check").get_to(r.worst_check);
  return r;
}

}  // namespace attnflow::harness
