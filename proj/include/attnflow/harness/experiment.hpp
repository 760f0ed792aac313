#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attnflow/attention.hpp"
#include "attnflow/dynamics.hpp"

#include "json.hpp"

namespace attnflow::harness {

inline constexpr const char* kVersion = "0.1.0";
/// Environment variable holding the default output directory.
inline constexpr const char* kOutDirEnv = "ATTNFLOW_OUT_DIR";

/// Prepackaged experiment families. Each non-custom scenario carries a
/// complete default parameter set; `custom` takes everything from the spec.
enum class Scenario {
  alignment_energy,   ///< random tokens, block-projection heads: per-head vs total energy
  superadditivity,    ///< rate function, its thresholds, and strength-split margins
  relu_vs_softmax,    ///< reduced-ODE clustering-time comparison plus a d-sweep
  entropy_phases,     ///< scalar equiangular run: entropy rise and production rate
  convergence,        ///< reduced two-head run: epsilon decay and energy-gap bounds
  custom,
};

const char* to_string(Scenario s);
std::optional<Scenario> scenario_from_string(std::string_view name);

struct ExperimentSpec {
  Scenario scenario = Scenario::custom;
  int n = 8;
  int d = 20;
  int head_count = 2;
  double beta = 1.0;
  /// Scalar head strengths; empty means block-projection heads carving d
  /// into head_count coordinate bands.
  std::vector<double> lambdas;
  double gamma0 = 0.05;
  double dt = 1e-3;
  double t_end = 10.0;
  int sample_every = 10;
  std::uint64_t seed = 1;
  DynamicsKind kind = DynamicsKind::sphere;
  /// Series to emit; empty selects the scenario's defaults.
  std::vector<std::string> outputs;
  std::string out_dir = ".";

  /// Throws SpecValidationError naming every offending field.
  void validate() const;
};

ExperimentSpec default_spec(Scenario scenario);

void to_json(nlohmann::json& j, const ExperimentSpec& spec);
void from_json(const nlohmann::json& j, ExperimentSpec& spec);

/// Scalar heads from `lambdas`, or block projections when it is empty.
std::vector<HeadSpec> build_heads(const ExperimentSpec& spec);

struct RunResult {
  std::optional<TrajectoryRecord> trajectory;
  std::vector<std::filesystem::path> files;  ///< CSVs plus the JSON manifest
};

/// Runs the scenario and emits one CSV per requested series plus a manifest
/// (parameters, seed, version, column schema). Deterministic for fixed spec:
/// reruns produce byte-identical files.
RunResult run_scenario(const ExperimentSpec& spec);

}  // namespace attnflow::harness
