#include "stlr/dense_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stlr {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::cols_slice(std::size_t first, std::size_t count) const {
  Matrix s(rows_, count);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < count; ++j) s(i, j) = (*this)(i, first + j);
  return s;
}

double Matrix::frobenius() const {
  double s = 0.0;
  for (double x : a_) s += x * x;
  return std::sqrt(s);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at_b: shape mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  }
  return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace {

// One-sided Jacobi: orthogonalizes the columns of a, accumulating the
// rotations in v (so a_in = a_out * v^T).
void jacobi_column_sweeps(Matrix& a, Matrix& v) {
  const std::size_t m = a.rows(), n = a.cols();
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          app += a(i, p) * a(i, p);
          aqq += a(i, q) * a(i, q);
          apq += a(i, p) * a(i, q);
        }
        if (std::abs(apq) <= 1e-15 * std::sqrt(app * aqq) || apq == 0.0) continue;
        converged = false;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = c * x - s * y;
          a(i, q) = s * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
    if (converged) break;
  }
}

}  // namespace

SvdResult jacobi_svd(const Matrix& a_in, double rel_tol) {
  // Work on the transpose when it makes the column count smaller.
  const bool flip = a_in.cols() > a_in.rows();
  Matrix a = flip ? a_in.transposed() : a_in;
  const std::size_t m = a.rows(), n = a.cols();

  Matrix v = Matrix::identity(n);
  jacobi_column_sweeps(a, v);

  std::vector<double> sig(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
    sig[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return sig[i] > sig[j]; });

  const double smax = sig.empty() ? 0.0 : sig[order[0]];
  std::size_t r = 0;
  while (r < n && sig[order[r]] > rel_tol * smax && sig[order[r]] > 0.0) ++r;

  SvdResult out;
  out.sigma.resize(r);
  out.u = Matrix(m, r);
  out.v = Matrix(n, r);
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = sig[j];
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = a(i, j) / sig[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
  }
  if (flip) std::swap(out.u, out.v);
  return out;
}

Matrix nullspace(const Matrix& a_in, double rel_tol) {
  Matrix a = a_in;
  const std::size_t m = a.rows(), n = a.cols();
  Matrix v = Matrix::identity(n);
  jacobi_column_sweeps(a, v);
  std::vector<double> sig(n, 0.0);
  double smax = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
    sig[j] = std::sqrt(s);
    smax = std::max(smax, sig[j]);
  }
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < n; ++j)
    if (sig[j] <= rel_tol * smax) keep.push_back(j);
  Matrix out(n, keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k)
    for (std::size_t i = 0; i < n; ++i) out(i, k) = v(i, keep[k]);
  return out;
}

EigResult sym_eig(const Matrix& s_in) {
  const std::size_t n = s_in.rows();
  if (s_in.cols() != n) throw std::invalid_argument("sym_eig: not square");
  Matrix a = s_in;
  Matrix q = Matrix::identity(n);
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a(i, i) * a(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off <= 1e-30 * (diag + off) || off == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apq = a(p, r);
        if (apq == 0.0) continue;
        const double theta = (a(r, r) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = a(i, p), y = a(i, r);
          a(i, p) = c * x - sn * y;
          a(i, r) = sn * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = a(p, i), y = a(r, i);
          a(p, i) = c * x - sn * y;
          a(r, i) = sn * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = q(i, p), y = q(i, r);
          q(i, p) = c * x - sn * y;
          q(i, r) = sn * x + c * y;
        }
      }
    }
  }
  std::vector<double> lam(n);
  for (std::size_t i = 0; i < n; ++i) lam[i] = a(i, i);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return lam[i] > lam[j]; });

  EigResult out;
  out.lambda.resize(n);
  out.q = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.lambda[k] = lam[order[k]];
    for (std::size_t i = 0; i < n; ++i) out.q(i, k) = q(i, order[k]);
  }
  return out;
}

void thin_qr(const Matrix& a, Matrix& q, Matrix& r) {
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t k = std::min(m, n);
  Matrix w = a;  // Householder vectors accumulate in-place below the diagonal
  r = Matrix(k, n);
  std::vector<double> beta(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = j; i < m; ++i) s += w(i, j) * w(i, j);
    double alpha = std::sqrt(s);
    if (alpha == 0.0) {
      beta[j] = 0.0;
      continue;
    }
    if (w(j, j) > 0) alpha = -alpha;
    const double v0 = w(j, j) - alpha;
    for (std::size_t i = j + 1; i < m; ++i) w(i, j) /= v0;
    beta[j] = -v0 / alpha;
    w(j, j) = alpha;  // stores R's diagonal; implicit v(j)=1
    for (std::size_t c = j + 1; c < n; ++c) {
      double t = w(j, c);
      for (std::size_t i = j + 1; i < m; ++i) t += w(i, j) * w(i, c);
      t *= beta[j];
      w(j, c) -= t;
      for (std::size_t i = j + 1; i < m; ++i) w(i, c) -= t * w(i, j);
    }
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < n; ++j) r(i, j) = w(i, j);
  // Accumulate Q by applying the reflectors to the first k columns of I.
  q = Matrix(m, k);
  for (std::size_t i = 0; i < k; ++i) q(i, i) = 1.0;
  for (std::size_t j = k; j-- > 0;) {
    if (beta[j] == 0.0) continue;
    for (std::size_t c = 0; c < k; ++c) {
      double t = q(j, c);
      for (std::size_t i = j + 1; i < m; ++i) t += w(i, j) * q(i, c);
      t *= beta[j];
      q(j, c) -= t;
      for (std::size_t i = j + 1; i < m; ++i) q(i, c) -= t * w(i, j);
    }
  }
}

Matrix cholesky(const Matrix& s) {
  const std::size_t n = s.rows();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = s(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
      if (i == j) {
        if (sum <= 0.0) throw std::runtime_error("cholesky: matrix not SPD");
        l(i, i) = std::sqrt(sum);
      } else {
        l(i, j) = sum / l(j, j);
      }
    }
  }
  return l;
}

std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  std::vector<double> y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= l(k, i) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

}  // namespace stlr
