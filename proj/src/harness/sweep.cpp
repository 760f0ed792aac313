#include "attnflow/harness/sweep.hpp"

#include <cmath>
#include <stdexcept>

#include "attnflow/dynamics.hpp"
#include "attnflow/energy.hpp"
#include "attnflow/equiangular.hpp"
#include "attnflow/errors.hpp"
#include "attnflow/thresholds.hpp"

namespace attnflow::harness {

namespace {

std::vector<double> relu_vs_softmax_point(const ExperimentSpec& spec, double dim) {
  const double lambda = spec.lambdas.at(0);
  ReducedSpec relu;
  relu.kernel = ReducedSpec::Kernel::relu;
  relu.lambdas = {lambda};
  relu.n = spec.n;
  ReducedSpec soft;
  soft.kernel = ReducedSpec::Kernel::softmax;
  soft.lambdas = {lambda};
  soft.beta = spec.beta;
  soft.n = spec.n;
  soft.normalized = false;

  const double gamma0_relu = 0.5 / std::sqrt(dim);
  const double target = 0.99;
  const double t_relu = clustering_time(gamma0_relu, target, relu, spec.dt, 200.0);
  const double t_soft = clustering_time(spec.gamma0, target, soft, spec.dt, 200.0);
  return {gamma0_relu, t_relu, t_soft, t_relu / t_soft};
}

std::vector<double> convergence_point(const ExperimentSpec& spec, double total) {
  ReducedSpec rs;
  rs.kernel = ReducedSpec::Kernel::softmax;
  // Fixed 1:3 split of the total strength between two heads.
  rs.lambdas = {0.25 * total, 0.75 * total};
  rs.beta = spec.beta;
  rs.n = spec.n;
  // Run long enough for epsilon to cross the fit window at this rate.
  const double t_end = std::max(4.0, 16.0 / total) + 2.0 * (1.0 / total) *
                                                         std::log(1.0 / (1.0 - spec.gamma0));
  const ReducedSeries series = integrate_reduced(spec.gamma0, rs, spec.dt, t_end);
  const double fitted = -fit_late_time_rate(series);
  return {fitted, 2.0 * total, fitted / (2.0 * total)};
}

std::vector<double> superadditivity_point(const ExperimentSpec& spec, double spread) {
  double mean = 0.0;
  for (double l : spec.lambdas) mean += l;
  mean /= spec.lambdas.size();
  std::vector<double> split;
  for (double l : spec.lambdas) split.push_back(mean + spread * (l - mean));
  const SuperadditivityMargin m = superadditivity_margin(split, spec.beta, spec.n);
  return {m.margin, m.condition_ok ? 1.0 : 0.0};
}

std::vector<double> beta_point(const ExperimentSpec& spec, double beta) {
  const TokenConfiguration cfg =
      equiangular_configuration(spec.n, std::max(spec.d, spec.n), spec.gamma0, beta);
  std::vector<HeadSpec> heads;
  for (double l : spec.lambdas) heads.push_back(HeadSpec::scalar(cfg.dim(), l));
  const FlowState st = compute_flow_state(cfg, heads);
  const RadialDominanceReport rd = check_radial_dominance(st, cfg);
  return {rd.min_margin, rd.all_ok ? 1.0 : 0.0};
}

}  // namespace

Table SweepResult::to_table() const {
  Table t;
  t.name = "sweep";
  t.columns.push_back({parameter, ""});
  for (const std::string& m : metric_names) t.columns.push_back({m, ""});
  for (const SweepPoint& p : points) {
    std::vector<double> row{p.value};
    if (p.error.empty()) {
      row.insert(row.end(), p.metrics.begin(), p.metrics.end());
    } else {
      row.insert(row.end(), metric_names.size(), std::nan(""));
    }
    t.rows.push_back(std::move(row));
    t.notes.push_back(p.error);
  }
  return t;
}

SweepResult sweep(const ExperimentSpec& base, const std::string& parameter,
                  const std::vector<double>& values) {
  base.validate();
  if (values.empty())
    throw SpecValidationError({"values"}, "sweep: empty parameter grid");

  SweepResult result;
  result.parameter = parameter;

  std::vector<double> (*point_fn)(const ExperimentSpec&, double) = nullptr;
  if (base.scenario == Scenario::relu_vs_softmax && parameter == "d") {
    point_fn = relu_vs_softmax_point;
    result.metric_names = {"gamma0_relu", "t_relu", "t_softmax", "ratio"};
  } else if (base.scenario == Scenario::convergence && parameter == "Lambda") {
    point_fn = convergence_point;
    result.metric_names = {"fitted_rate", "expected_rate", "ratio"};
  } else if (base.scenario == Scenario::superadditivity && parameter == "spread") {
    point_fn = superadditivity_point;
    result.metric_names = {"margin", "condition_ok"};
  } else if (base.scenario == Scenario::custom && parameter == "beta") {
    point_fn = beta_point;
    result.metric_names = {"min_margin", "tau_ok"};
  } else {
    throw SpecValidationError({"parameter"},
                              std::string("sweep: unsupported scenario/parameter pair ") +
                                  to_string(base.scenario) + "/" + parameter);
  }

  result.points.resize(values.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(values.size()); ++k) {
    SweepPoint& p = result.points[k];
    p.value = values[k];
    try {
      p.metrics = point_fn(base, values[k]);
    } catch (const std::exception& e) {
      p.error = e.what();
    }
  }
  return result;
}

}  // namespace attnflow::harness
