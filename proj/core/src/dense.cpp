#include "diffinv/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffinv/error.hpp"

namespace diffinv {

DenseMatrix DenseMatrix::identity(int n) {
  DenseMatrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::vector<double> DenseMatrix::apply(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != cols_) throw ShapeError("DenseMatrix::apply: size mismatch");
  std::vector<double> y(static_cast<std::size_t>(rows_), 0.0);
  for (int r = 0; r < rows_; ++r) {
    const double* row = &data_[static_cast<std::size_t>(r) * cols_];
    double acc = 0.0;
    for (int c = 0; c < cols_; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

std::vector<double> DenseMatrix::apply_transpose(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != rows_) throw ShapeError("DenseMatrix::apply_transpose: size mismatch");
  std::vector<double> y(static_cast<std::size_t>(cols_), 0.0);
  for (int r = 0; r < rows_; ++r) {
    const double* row = &data_[static_cast<std::size_t>(r) * cols_];
    const double xr = x[r];
    for (int c = 0; c < cols_; ++c) y[c] += row[c] * xr;
  }
  return y;
}

double DenseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double DenseMatrix::trace() const {
  double s = 0.0;
  for (int i = 0; i < std::min(rows_, cols_); ++i) s += (*this)(i, i);
  return s;
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double DenseMatrix::symmetry_defect() const {
  if (rows_ != cols_) throw ShapeError("symmetry_defect: matrix not square");
  double d = 0.0;
  for (int r = 0; r < rows_; ++r)
    for (int c = r + 1; c < cols_; ++c) d = std::max(d, std::abs((*this)(r, c) - (*this)(c, r)));
  return d;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

namespace {

void check_symmetric(const DenseMatrix& s, const char* who) {
  if (s.rows() != s.cols()) throw ShapeError(std::string(who) + ": matrix not square");
  const double tol = 1e-12 * std::max(1.0, s.max_abs());
  if (s.symmetry_defect() > tol) throw DomainError(std::string(who) + ": matrix not symmetric");
}

}  // namespace

SymEig sym_eig(const DenseMatrix& s) {
  check_symmetric(s, "sym_eig");
  const int n = s.rows();
  DenseMatrix a = s;
  DenseMatrix v = DenseMatrix::identity(n);

  // cyclic Jacobi sweeps
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * std::max(1.0, a.frobenius_norm() * a.frobenius_norm())) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;

        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

  SymEig out;
  out.values.resize(static_cast<std::size_t>(n));
  out.vectors = DenseMatrix(n, n);
  for (int j = 0; j < n; ++j) {
    out.values[static_cast<std::size_t>(j)] = a(order[j], order[j]);
    for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

DenseMatrix matrix_sqrt_psd(const DenseMatrix& s) {
  SymEig eig = sym_eig(s);
  const int n = s.rows();
  const double lambda_max = eig.values.empty() ? 0.0 : std::max(0.0, eig.values.front());
  const double clamp = -1e-10 * std::max(lambda_max, 1e-300);
  for (double& lambda : eig.values) {
    if (lambda < clamp) throw DomainError("matrix_sqrt_psd: matrix not positive semidefinite");
    lambda = std::sqrt(std::max(lambda, 0.0));
  }
  // R = V diag(sqrt(lambda)) V^T
  DenseMatrix r(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += eig.vectors(i, k) * eig.values[static_cast<std::size_t>(k)] * eig.vectors(j, k);
      r(i, j) = acc;
      r(j, i) = acc;
    }
  }
  return r;
}

CholeskyFactor::CholeskyFactor(const DenseMatrix& s) {
  check_symmetric(s, "CholeskyFactor");
  const int n = s.rows();
  l_ = DenseMatrix(n, n);
  for (int j = 0; j < n; ++j) {
    double d = s(j, j);
    for (int k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
    if (d <= 0.0) throw SolverError("CholeskyFactor: matrix not positive definite");
    l_(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double acc = s(i, j);
      for (int k = 0; k < j; ++k) acc -= l_(i, k) * l_(j, k);
      l_(i, j) = acc / l_(j, j);
    }
  }
}

void CholeskyFactor::solve_in_place(std::span<double> b) const {
  const int n = l_.rows();
  if (static_cast<int>(b.size()) != n) throw ShapeError("CholeskyFactor::solve: size mismatch");
  for (int i = 0; i < n; ++i) {
    double acc = b[i];
    for (int k = 0; k < i; ++k) acc -= l_(i, k) * b[k];
    b[i] = acc / l_(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    double acc = b[i];
    for (int k = i + 1; k < n; ++k) acc -= l_(k, i) * b[k];
    b[i] = acc / l_(i, i);
  }
}

std::vector<double> CholeskyFactor::solve(std::span<const double> b) const {
  std::vector<double> x(b.begin(), b.end());
  solve_in_place(x);
  return x;
}

}  // namespace diffinv
