#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "attnflow/attention.hpp"
#include "attnflow/energy.hpp"

namespace attnflow {

/// One explicit RK4 step. Sphere kinds project every stage velocity
/// tangentially (the vector field does) and renormalize tokens afterwards;
/// flat does neither. Throws NumericalBlowupError, naming the token, when a
/// stage produces non-finite values.
TokenConfiguration step(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                        DynamicsKind kind, double dt);

struct IntegrateOptions {
  double dt = 1e-3;
  double t_end = 10.0;
  int sample_every = 10;        ///< record every this many steps
  bool record_pairwise = false; ///< keep full Gram matrices per sample
};

/// Sampled series along one trajectory. All series align one-to-one with
/// `times`. t_crit is the (interpolated) first time the radial-dominance
/// margin of any (token, head) crosses below zero; halted_at is set once the
/// kinetic energy stays below 1e-16 for three consecutive samples.
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<EnergyReport> energies;
  std::vector<double> mean_alignment;
  std::vector<std::vector<double>> pairwise;   ///< n*n Gram per sample (optional)
  std::vector<std::vector<double>> entropies;  ///< attention entropies, [i*H+h] per sample
  std::vector<std::uint8_t> condition_tau_ok;
  std::vector<double> min_tau_margin;
  std::optional<double> t_crit;
  std::optional<double> halted_at;
  std::optional<TokenConfiguration> final_configuration;
};

TrajectoryRecord integrate(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                           DynamicsKind kind, const IntegrateOptions& options);

/// Advance by `duration` (which may be negative: the field is integrated in
/// reversed time) using RK4 substeps of size sub_dt. Used by the
/// finite-difference oracles, which need states on both sides of t.
TokenConfiguration advance(const TokenConfiguration& cfg, std::span<const HeadSpec> heads,
                           DynamicsKind kind, double duration, double sub_dt);

/// n tokens drawn as normalized standard Gaussians from a seeded generator.
/// The same seed reproduces the configuration bit for bit.
TokenConfiguration random_configuration(int n, int d, std::uint64_t seed, double beta = 1.0);

/// Tokens with every pairwise inner product exactly gamma0. Requires d >= n
/// and gamma0 in the open interval (-1/(n-1), 1).
TokenConfiguration equiangular_configuration(int n, int d, double gamma0, double beta = 1.0);

}  // namespace attnflow
