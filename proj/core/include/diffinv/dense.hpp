#pragma once

#include <span>
#include <vector>

namespace diffinv {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {}

  static DenseMatrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  DenseMatrix transpose() const;
  std::vector<double> apply(std::span<const double> x) const;            // A x
  std::vector<double> apply_transpose(std::span<const double> x) const;  // A^T x
  double frobenius_norm() const;
  double trace() const;
  double max_abs() const;
  /// max_ij |A_ij - A_ji|
  double symmetry_defect() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues sorted descending, eigenvectors as columns of an orthonormal
/// matrix: S = V diag(values) V^T. Throws DomainError on asymmetric input.
struct SymEig {
  std::vector<double> values;
  DenseMatrix vectors;
};
SymEig sym_eig(const DenseMatrix& s);

/// Symmetric PSD square root: R with R R = S. Eigenvalues slightly below
/// zero (>= -1e-10 * lambda_max) are clamped; anything lower throws
/// DomainError.
DenseMatrix matrix_sqrt_psd(const DenseMatrix& s);

/// Cholesky factorization of a symmetric positive definite matrix,
/// for repeated right-hand-side solves.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const DenseMatrix& s);
  std::vector<double> solve(std::span<const double> b) const;
  /// In-place solve of L L^T x = b.
  void solve_in_place(std::span<double> b) const;
  const DenseMatrix& lower() const { return l_; }

 private:
  DenseMatrix l_;
};

}  // namespace diffinv
