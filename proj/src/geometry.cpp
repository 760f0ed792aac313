#include "attnflow/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include "attnflow/errors.hpp"

namespace attnflow {

UnitVector::UnitVector(Vec coords) : coords_(std::move(coords)) {
  const double n = norm(coords_);
  if (std::abs(n - 1.0) > kIdentityTol)
    throw std::invalid_argument("UnitVector: norm deviates from 1 by more than 1e-12");
}

Vec project_tangent(std::span<const double> x, std::span<const double> v) {
  if (x.size() != v.size()) throw std::invalid_argument("project_tangent: dimension mismatch");
  const double r = dot(v, x);
  Vec out(v.begin(), v.end());
  for (size_t k = 0; k < out.size(); ++k) out[k] -= r * x[k];
  return out;
}

void project_tangent_inplace(std::span<const double> x, std::span<double> v) {
  if (x.size() != v.size()) throw std::invalid_argument("project_tangent: dimension mismatch");
  const double r = dot({v.data(), v.size()}, x);
  for (size_t k = 0; k < v.size(); ++k) v[k] -= r * x[k];
}

RadialTangential decompose(std::span<const double> x, std::span<const double> f) {
  if (x.size() != f.size()) throw std::invalid_argument("decompose: dimension mismatch");
  const double fnorm = norm(f);
  if (fnorm < kDegenerateNorm) return {};
  RadialTangential rt;
  rt.radial = dot(f, x);
  double t2 = 0.0;
  for (size_t k = 0; k < f.size(); ++k) {
    const double c = f[k] - rt.radial * x[k];
    t2 += c * c;
  }
  rt.tangential_norm = std::sqrt(t2);
  rt.alignment_fraction = std::abs(rt.radial) / fnorm;
  return rt;
}

UnitVector renormalize(std::span<const double> v) {
  const double n = norm(v);
  if (n <= kDegenerateNorm)
    throw DegenerateStateError("renormalize: vector norm below 1e-14");
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return UnitVector(std::move(out));
}

}  // namespace attnflow
