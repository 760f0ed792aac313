#pragma once

#include <span>

#include "attnflow/linalg.hpp"

namespace attnflow {

/// Absolute tolerance for the projection identities and unit-norm checks.
inline constexpr double kIdentityTol = 1e-12;
/// Tolerance for derived Pythagoras checks (accumulated rounding).
inline constexpr double kPythagorasTol = 1e-10;
/// Norms below this are treated as exactly zero.
inline constexpr double kDegenerateNorm = 1e-14;

/// Split of a vector f relative to a base point x on the sphere:
/// radial = <f, x>, tangential_norm = ||f - radial x||, and
/// alignment_fraction = |radial| / ||f||. All zero when ||f|| vanishes.
struct RadialTangential {
  double radial = 0.0;
  double tangential_norm = 0.0;
  double alignment_fraction = 0.0;
};

/// A vector validated to have unit Euclidean norm (within kIdentityTol).
class UnitVector {
 public:
  explicit UnitVector(Vec coords);

  const Vec& coords() const { return coords_; }
  operator std::span<const double>() const { return coords_; }
  int dim() const { return static_cast<int>(coords_.size()); }

 private:
  Vec coords_;
};

/// v - <v, x> x. Requires ||x|| = 1; result is orthogonal to x.
Vec project_tangent(std::span<const double> x, std::span<const double> v);

/// In-place variant for inner loops.
void project_tangent_inplace(std::span<const double> x, std::span<double> v);

/// Radial-tangential split of f at base point x (||x|| = 1).
RadialTangential decompose(std::span<const double> x, std::span<const double> f);

/// v / ||v||. Throws DegenerateStateError when ||v|| <= kDegenerateNorm.
UnitVector renormalize(std::span<const double> v);

}  // namespace attnflow
