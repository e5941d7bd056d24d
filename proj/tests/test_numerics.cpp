#include <doctest.h>

#include <cmath>

#include "diffinv/dense.hpp"
#include "diffinv/error.hpp"
#include "diffinv/rng.hpp"

using namespace diffinv;

namespace {

DenseMatrix random_psd(RngStream& rng, int n) {
  DenseMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return matmul(a.transpose(), a);
}

double rel_frob(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix d = a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) d(i, j) -= b(i, j);
  return d.frobenius_norm() / std::max(b.frobenius_norm(), 1e-300);
}

}  // namespace

TEST_CASE("sym_eig: identity") {
  SymEig e = sym_eig(DenseMatrix::identity(3));
  for (double v : e.values) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("sym_eig: diagonal, descending order, axis-aligned vectors") {
  DenseMatrix s(2, 2);
  s(0, 0) = 4.0;
  s(1, 1) = 1.0;
  SymEig e = sym_eig(s);
  CHECK(e.values[0] == doctest::Approx(4.0));
  CHECK(e.values[1] == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors(0, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(e.vectors(1, 1)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig: reconstruction of random gram matrix") {
  RngStream rng(11);
  DenseMatrix s = random_psd(rng, 5);
  SymEig e = sym_eig(s);
  // V diag(w) V^T
  DenseMatrix r(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 5; ++k) acc += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
      r(i, j) = acc;
    }
  CHECK(rel_frob(r, s) <= 1e-8);
  // orthonormality
  DenseMatrix vtv = matmul(e.vectors.transpose(), e.vectors);
  CHECK(rel_frob(vtv, DenseMatrix::identity(5)) <= 1e-10);
}

TEST_CASE("sym_eig: rejects asymmetric input") {
  DenseMatrix s(2, 2);
  s(0, 1) = 1.0;
  CHECK_THROWS_AS(sym_eig(s), DomainError);
}

TEST_CASE("matrix_sqrt_psd: identity and diagonal") {
  DenseMatrix r = matrix_sqrt_psd(DenseMatrix::identity(3));
  CHECK(rel_frob(r, DenseMatrix::identity(3)) <= 1e-12);

  DenseMatrix d(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  DenseMatrix rd = matrix_sqrt_psd(d);
  CHECK(rd(0, 0) == doctest::Approx(2.0));
  CHECK(rd(1, 1) == doctest::Approx(3.0));
  CHECK(rd(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("matrix_sqrt_psd: multiply-back on random gram matrix") {
  RngStream rng(7);
  DenseMatrix s = random_psd(rng, 4);
  DenseMatrix r = matrix_sqrt_psd(s);
  CHECK(rel_frob(matmul(r, r), s) <= 1e-7);
}

TEST_CASE("matrix_sqrt_psd: rejects indefinite input") {
  DenseMatrix s(2, 2);
  s(0, 0) = 1.0;
  s(1, 1) = -1.0;
  CHECK_THROWS_AS(matrix_sqrt_psd(s), DomainError);
}

TEST_CASE("matrix_sqrt_psd: reconstruction property over random PSD matrices") {
  RngStream rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(31));
    DenseMatrix s = random_psd(rng, n);
    DenseMatrix r = matrix_sqrt_psd(s);
    CHECK(rel_frob(matmul(r, r), s) <= 1e-7);
    SymEig e = sym_eig(s);
    const double lmax = e.values.front();
    for (double v : e.values) CHECK(v >= -1e-10 * lmax);
  }
}

TEST_CASE("cholesky: solves SPD system") {
  RngStream rng(3);
  DenseMatrix s = random_psd(rng, 6);
  for (int i = 0; i < 6; ++i) s(i, i) += 6.0;
  std::vector<double> x_true = gaussian_draw(rng, 6);
  std::vector<double> b = s.apply(x_true);
  CholeskyFactor f(s);
  std::vector<double> x = f.solve(b);
  for (int i = 0; i < 6; ++i) CHECK(x[i] == doctest::Approx(x_true[i]).epsilon(1e-9));
}

TEST_CASE("gaussian_draw: moments at n = 1e6") {
  RngStream rng(42);
  const int n = 1000000;
  std::vector<double> x = gaussian_draw(rng, n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  CHECK(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(n)));
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= (n - 1);
  CHECK(var == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("gaussian_draw: deterministic per (seed, stream)") {
  RngStream a(5, 2), b(5, 2), c(5, 3);
  auto xa = gaussian_draw(a, 100);
  auto xb = gaussian_draw(b, 100);
  auto xc = gaussian_draw(c, 100);
  CHECK(xa == xb);
  CHECK(xa != xc);
}

TEST_CASE("gaussian_draw: rejects non-positive n") {
  RngStream rng(1);
  CHECK_THROWS_AS(gaussian_draw(rng, 0), DomainError);
}
