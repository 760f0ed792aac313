#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "attnflow/errors.hpp"
#include "attnflow/harness/experiment.hpp"
#include "attnflow/harness/sweep.hpp"
#include "attnflow/harness/verify.hpp"
#include "attnflow/thresholds.hpp"

namespace {

using namespace attnflow;
using harness::ExperimentSpec;

constexpr int kExitOk = 0;
constexpr int kExitSpecError = 1;
constexpr int kExitVerifyFailed = 2;
constexpr int kExitBlowup = 3;

std::string default_out_dir() {
  if (const char* env = std::getenv(harness::kOutDirEnv)) return env;
  return ".";
}

struct SpecFlags {
  std::string config;
  std::string scenario;
  int n = -1, d = -1, heads = -1, sample_every = -1;
  double beta = -1, gamma0 = -2, dt = -1, t_end = -1;
  std::vector<double> lambdas;
  std::string dynamics;
  std::int64_t seed = -1;
  std::string out_dir;
};

void add_spec_flags(CLI::App* cmd, SpecFlags& f) {
  cmd->add_option("--config", f.config, "JSON file mirroring the experiment spec");
  cmd->add_option("--scenario", f.scenario,
                  "alignment_energy|superadditivity|relu_vs_softmax|entropy_phases|"
                  "convergence|custom");
  cmd->add_option("--n", f.n, "token count");
  cmd->add_option("--d", f.d, "ambient dimension");
  cmd->add_option("--heads", f.heads, "head count (block projections unless --lambda given)");
  cmd->add_option("--beta", f.beta, "inverse temperature");
  cmd->add_option("--lambda", f.lambdas, "scalar head strengths");
  cmd->add_option("--gamma0", f.gamma0, "initial common alignment");
  cmd->add_option("--dt", f.dt, "integrator step");
  cmd->add_option("--t-end", f.t_end, "integration horizon");
  cmd->add_option("--sample-every", f.sample_every, "steps between samples");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--dynamics", f.dynamics, "flat|sphere|normalized|relu_sphere");
  cmd->add_option("--out-dir", f.out_dir, "output directory (default $ATTNFLOW_OUT_DIR or .)");
}

ExperimentSpec build_spec(const SpecFlags& f) {
  ExperimentSpec spec;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw SpecValidationError({"config"}, "cannot open config file: " + f.config);
    nlohmann::json j;
    in >> j;
    spec = j.get<ExperimentSpec>();
  }
  if (!f.scenario.empty()) {
    const auto s = harness::scenario_from_string(f.scenario);
    if (!s) throw SpecValidationError({"scenario"}, "unknown scenario: " + f.scenario);
    // CLI flags override file values, so reapply the file/flag fields on top
    // of the scenario defaults only when the scenario actually changed.
    if (f.config.empty() || *s != spec.scenario) spec = harness::default_spec(*s);
  }
  if (f.n >= 0) spec.n = f.n;
  if (f.d >= 0) spec.d = f.d;
  if (f.heads >= 0) spec.head_count = f.heads;
  if (f.beta >= 0) spec.beta = f.beta;
  if (!f.lambdas.empty()) {
    spec.lambdas = f.lambdas;
    spec.head_count = static_cast<int>(f.lambdas.size());
  }
  if (f.gamma0 > -2) spec.gamma0 = f.gamma0;
  if (f.dt >= 0) spec.dt = f.dt;
  if (f.t_end >= 0) spec.t_end = f.t_end;
  if (f.sample_every >= 0) spec.sample_every = f.sample_every;
  if (f.seed >= 0) spec.seed = static_cast<std::uint64_t>(f.seed);
  if (!f.dynamics.empty()) {
    const auto k = dynamics_kind_from_string(f.dynamics);
    if (!k) throw SpecValidationError({"dynamics"}, "unknown dynamics kind: " + f.dynamics);
    spec.kind = *k;
  }
  spec.out_dir = !f.out_dir.empty() ? f.out_dir : default_out_dir();
  return spec;
}

int run_simulate(const SpecFlags& flags) {
  const ExperimentSpec spec = build_spec(flags);
  const harness::RunResult result = harness::run_scenario(spec);
  for (const auto& p : result.files) std::cout << "wrote " << p.string() << '\n';
  return kExitOk;
}

int run_verify(std::uint64_t seed, int trials, const std::string& out_dir) {
  harness::VerifySizes sizes;
  sizes.trials = trials;
  const harness::VerificationReport report = harness::verify_all(seed, sizes);
  for (const auto& c : report.checks)
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << "  residual " << c.residual
              << "  tolerance " << c.tolerance << "  (" << c.detail << ")\n";
  std::cout << report.passed << " passed, " << report.failed << " failed; worst residual "
            << report.worst_residual << " (" << report.worst_check << ")\n";

  nlohmann::json j = report;
  std::filesystem::create_directories(out_dir);
  const auto path = std::filesystem::path(out_dir) / "verification_report.json";
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  std::cout << "wrote " << path.string() << '\n';
  return report.all_passed() ? kExitOk : kExitVerifyFailed;
}

int run_thresholds(int heads, int n, double beta, double alpha) {
  const ThresholdSet ts = compute_thresholds(heads, n, beta, alpha);
  std::cout << "H = " << ts.head_count << ", n = " << ts.n << ", beta = " << ts.beta
            << ", alpha = " << ts.alpha << '\n';
  std::cout << "critical alignment c*(H)   = " << ts.critical_alignment << '\n';
  if (ts.critical_beta)
    std::cout << "critical temperature beta* = " << *ts.critical_beta << '\n';
  else
    std::cout << "critical temperature beta* = (none: needs H >= 2 and n > 1/c*^2)\n";
  std::cout << "optimal strength lambda*   = " << ts.optimal_strength << '\n';
  std::cout << "inflection lambda_c        = " << ts.inflection_strength << '\n';
  return kExitOk;
}

int run_sweep(const SpecFlags& flags, const std::string& parameter,
              std::vector<double> values) {
  ExperimentSpec spec = build_spec(flags);
  if (spec.scenario == harness::Scenario::custom && spec.lambdas.empty()) {
    spec.lambdas = {1.0, 1.0};  // beta sweeps certify scalar heads
    spec.head_count = 2;
    spec.gamma0 = 0.0;
  }
  const harness::SweepResult result = harness::sweep(spec, parameter, values);
  const harness::Table table = result.to_table();
  const auto path = harness::write_csv(spec.out_dir, table);
  std::cout << "wrote " << path.string() << '\n';
  for (const auto& p : result.points)
    if (!p.error.empty())
      std::cout << "point " << p.value << " failed: " << p.error << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-head attention dynamics on the sphere: simulator and checks"};
  app.require_subcommand(1);

  SpecFlags sim_flags;
  CLI::App* simulate = app.add_subcommand("simulate", "run a scenario and emit CSV series");
  add_spec_flags(simulate, sim_flags);

  std::int64_t verify_seed = 1;
  int verify_trials = 20;
  std::string verify_out;
  CLI::App* verify = app.add_subcommand("verify", "run the property suite and write a report");
  verify->add_option("--seed", verify_seed, "random seed");
  verify->add_option("--trials", verify_trials, "random trials per sampled check");
  verify->add_option("--out-dir", verify_out, "report directory");

  int th_heads = 2, th_n = 8;
  double th_beta = 1.0, th_alpha = 1.0;
  CLI::App* thresholds = app.add_subcommand("thresholds", "print the closed-form constants");
  thresholds->add_option("--H", th_heads, "head count");
  thresholds->add_option("--n", th_n, "token count");
  thresholds->add_option("--beta", th_beta, "inverse temperature");
  thresholds->add_option("--alpha", th_alpha, "scalar head strength");

  SpecFlags sweep_flags;
  std::string sweep_parameter;
  std::vector<double> sweep_values;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "scenario summary metrics over a grid");
  add_spec_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--parameter", sweep_parameter, "d|Lambda|spread|beta")->required();
  sweep_cmd->add_option("--values", sweep_values, "grid values")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(sim_flags);
    if (verify->parsed())
      return run_verify(static_cast<std::uint64_t>(verify_seed), verify_trials,
                        verify_out.empty() ? default_out_dir() : verify_out);
    if (thresholds->parsed()) return run_thresholds(th_heads, th_n, th_beta, th_alpha);
    if (sweep_cmd->parsed()) return run_sweep(sweep_flags, sweep_parameter, sweep_values);
  } catch (const SpecValidationError& e) {
    std::cerr << "spec error: " << e.what() << '\n';
    return kExitSpecError;
  } catch (const NumericalBlowupError& e) {
    std::cerr << "numerical blowup: " << e.what() << '\n';
    return kExitBlowup;
  } catch (const std::invalid_argument& e) {
    std::cerr << "spec error: " << e.what() << '\n';
    return kExitSpecError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSpecError;
  }
  return kExitOk;
}
