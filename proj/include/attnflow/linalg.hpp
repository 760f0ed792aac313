#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace attnflow {

using Vec = std::vector<double>;

/// Dense row-major matrix. Sizes here are small (d up to a few hundred),
/// so everything is plain loops; no BLAS.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  static Matrix identity(int d);
  static Matrix scaled_identity(int d, double s);

  Matrix transposed() const;
};

Matrix operator*(const Matrix& lhs, const Matrix& rhs);
Matrix operator+(const Matrix& lhs, const Matrix& rhs);
Matrix operator-(const Matrix& lhs, const Matrix& rhs);
Matrix operator*(double s, const Matrix& m);

double dot(std::span<const double> x, std::span<const double> y);
double norm(std::span<const double> x);

/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

/// out = m * x
void matvec(const Matrix& m, std::span<const double> x, std::span<double> out);
Vec matvec(const Matrix& m, std::span<const double> x);

/// max_{ij} |m_ij|
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& lhs, const Matrix& rhs);

/// Largest singular value via power iteration on MᵀM
/// (1e-12 relative convergence, capped at 10000 iterations).
double operator_norm(const Matrix& m);

/// All singular values, descending, via cyclic Jacobi on MᵀM.
Vec singular_values(const Matrix& m);

/// Smallest singular value above rank_cutoff * sigma_max; 0 if none.
double smallest_nonzero_singular_value(const Matrix& m, double rank_cutoff = 1e-10);

/// log(sum_i exp(v_i)) without overflow.
double log_sum_exp(std::span<const double> v);

}  // namespace attnflow
