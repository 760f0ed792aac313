#include "attnflow/linalg.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace attnflow {

Matrix Matrix::identity(int d) { return scaled_identity(d, 1.0); }

Matrix Matrix::scaled_identity(int d, double s) {
  Matrix m(d, d);
  for (int i = 0; i < d; ++i) m(i, i) = s;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix operator*(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.cols != rhs.rows) throw std::invalid_argument("matrix product: shape mismatch");
  Matrix out(lhs.rows, rhs.cols);
  for (int i = 0; i < lhs.rows; ++i)
    for (int k = 0; k < lhs.cols; ++k) {
      const double lik = lhs(i, k);
      if (lik == 0.0) continue;
      for (int j = 0; j < rhs.cols; ++j) out(i, j) += lik * rhs(k, j);
    }
  return out;
}

Matrix operator+(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.rows != rhs.rows || lhs.cols != rhs.cols)
    throw std::invalid_argument("matrix sum: shape mismatch");
  Matrix out = lhs;
  for (size_t k = 0; k < out.a.size(); ++k) out.a[k] += rhs.a[k];
  return out;
}

Matrix operator-(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.rows != rhs.rows || lhs.cols != rhs.cols)
    throw std::invalid_argument("matrix difference: shape mismatch");
  Matrix out = lhs;
  for (size_t k = 0; k < out.a.size(); ++k) out.a[k] -= rhs.a[k];
  return out;
}

Matrix operator*(double s, const Matrix& m) {
  Matrix out = m;
  for (double& x : out.a) x *= s;
  return out;
}

double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: dimension mismatch");
  for (size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  if (static_cast<int>(x.size()) != m.cols || static_cast<int>(out.size()) != m.rows)
    throw std::invalid_argument("matvec: dimension mismatch");
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = &m.a[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

Vec matvec(const Matrix& m, std::span<const double> x) {
  Vec out(m.rows);
  matvec(m, x, out);
  return out;
}

double max_abs(const Matrix& m) {
  double v = 0.0;
  for (double x : m.a) v = std::max(v, std::abs(x));
  return v;
}

double max_abs_diff(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.rows != rhs.rows || lhs.cols != rhs.cols)
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double v = 0.0;
  for (size_t k = 0; k < lhs.a.size(); ++k) v = std::max(v, std::abs(lhs.a[k] - rhs.a[k]));
  return v;
}

namespace {

// B = MᵀM, symmetric PSD, formed explicitly (d is small).
Matrix gram(const Matrix& m) {
  Matrix b(m.cols, m.cols);
  for (int i = 0; i < m.cols; ++i)
    for (int j = i; j < m.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < m.rows; ++k) s += m(k, i) * m(k, j);
      b(i, j) = s;
      b(j, i) = s;
    }
  return b;
}

}  // namespace

double operator_norm(const Matrix& m) {
  if (m.rows == 0 || m.cols == 0) return 0.0;
  const Matrix b = gram(m);
  const int d = b.rows;

  // Deterministic start vector; not orthogonal to the top eigenvector for
  // anything encountered in practice.
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = 1.0 / (1.0 + i);
  double nv = norm(v);
  for (double& x : v) x /= nv;

  Vec y(d);
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    matvec(b, v, y);
    const double ny = norm(y);
    if (ny == 0.0) return 0.0;
    for (int i = 0; i < d; ++i) v[i] = y[i] / ny;
    matvec(b, v, y);
    const double next = dot(v, y);  // Rayleigh quotient of the PSD Gram matrix
    if (std::abs(next - lambda) <= 1e-12 * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

Vec singular_values(const Matrix& m) {
  Matrix b = gram(m);
  const int d = b.rows;
  if (d == 0) return {};

  double fro = 0.0;
  for (double x : b.a) fro += x * x;
  fro = std::sqrt(fro);
  const double stop = std::max(1e-15 * fro, 1e-300);

  // Cyclic Jacobi sweeps; eigenvalues land on the diagonal.
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += 2.0 * b(p, q) * b(p, q);
    if (std::sqrt(off) <= stop) break;

    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        const double bpq = b(p, q);
        if (std::abs(bpq) <= 1e-300) continue;
        const double theta = (b(q, q) - b(p, p)) / (2.0 * bpq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double bkp = b(k, p), bkq = b(k, q);
          b(k, p) = c * bkp - s * bkq;
          b(k, q) = s * bkp + c * bkq;
        }
        for (int k = 0; k < d; ++k) {
          const double bpk = b(p, k), bqk = b(q, k);
          b(p, k) = c * bpk - s * bqk;
          b(q, k) = s * bpk + c * bqk;
        }
      }
  }

  Vec sv(d);
  for (int i = 0; i < d; ++i) sv[i] = std::sqrt(std::max(b(i, i), 0.0));
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

double smallest_nonzero_singular_value(const Matrix& m, double rank_cutoff) {
  const Vec sv = singular_values(m);
  if (sv.empty() || sv.front() == 0.0) return 0.0;
  const double cutoff = rank_cutoff * sv.front();
  double smallest = 0.0;
  for (double s : sv)
    if (s > cutoff) smallest = s;
  return smallest;
}

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace attnflow
