#pragma once

#include <string>
#include <vector>

#include "attnflow/harness/experiment.hpp"
#include "attnflow/harness/io.hpp"

namespace attnflow::harness {

/// One grid point: the swept value, the derived metrics, and an error string
/// when the point failed (the sweep itself continues).
struct SweepPoint {
  double value = 0.0;
  std::vector<double> metrics;
  std::string error;
};

struct SweepResult {
  std::string parameter;
  std::vector<std::string> metric_names;
  std::vector<SweepPoint> points;

  Table to_table() const;
};

/// Runs the scenario's summary metric at every grid value of the named
/// parameter. Supported pairs:
///   relu_vs_softmax over "d"      -> gamma0_relu, t_relu, t_softmax, ratio
///   convergence over "Lambda"     -> fitted_rate, expected_rate, ratio
///   superadditivity over "spread" -> margin, condition_ok
///   custom over "beta"            -> min_margin, tau_ok (scalar heads on an
///                                    equiangular start at the spec's gamma0)
/// Points run in parallel; results are ordered by the grid.
SweepResult sweep(const ExperimentSpec& base, const std::string& parameter,
                  const std::vector<double>& values);

}  // namespace attnflow::harness
