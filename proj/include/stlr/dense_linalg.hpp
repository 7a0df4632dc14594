#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stlr {

/// Dense row-major matrix. Small sizes only; everything here is O(n^3) at best.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  std::span<double> row(std::size_t i) { return {a_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {a_.data() + i * cols_, cols_}; }

  Matrix transposed() const;
  Matrix cols_slice(std::size_t first, std::size_t count) const;
  double frobenius() const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_at_b(const Matrix& a, const Matrix& b);  // a^T * b
std::vector<double> matvec(const Matrix& a, std::span<const double> x);

struct SvdResult {
  Matrix u;                    // m x r, orthonormal columns
  std::vector<double> sigma;   // descending, length r
  Matrix v;                    // n x r
};

/// One-sided Jacobi SVD of an m x n matrix. Columns with singular value below
/// rel_tol * sigma_max are dropped. Deterministic for identical inputs.
SvdResult jacobi_svd(const Matrix& a, double rel_tol = 1e-14);

/// Orthonormal basis (columns) of the numerical nullspace {x : a x = 0},
/// relative threshold on singular values.
Matrix nullspace(const Matrix& a, double rel_tol = 1e-10);

struct EigResult {
  Matrix q;                    // orthogonal, columns are eigenvectors
  std::vector<double> lambda;  // descending
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
EigResult sym_eig(const Matrix& s);

/// Thin Householder QR: a = q * r with q m x k, r k x n upper triangular, k = min(m,n).
void thin_qr(const Matrix& a, Matrix& q, Matrix& r);

/// Cholesky factor (lower) of an SPD matrix; throws std::runtime_error if not SPD.
Matrix cholesky(const Matrix& s);
std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace stlr
