#pragma once

#include <span>
#include <vector>

namespace stlr {

/// Gauss-Legendre rule with n points on [-1,1]; cached per n.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussRule& gauss_rule(int n);

/// Evaluate the Legendre series sum_q c[q] P_q(t) at t in [-1,1].
double legendre_eval(std::span<const double> c, double t);

/// Piecewise polynomial on [breakpoints.front(), breakpoints.back()], zero outside.
/// Each piece stores Legendre coefficients on its own interval, mapped to [-1,1].
class PiecewisePolynomial {
 public:
  PiecewisePolynomial() = default;
  PiecewisePolynomial(std::vector<double> breakpoints, std::vector<std::vector<double>> pieces);

  const std::vector<double>& breakpoints() const { return bp_; }
  const std::vector<std::vector<double>>& pieces() const { return pieces_; }
  std::size_t piece_count() const { return pieces_.size(); }
  bool empty() const { return pieces_.empty(); }

  double support_left() const { return bp_.front(); }
  double support_right() const { return bp_.back(); }

  double eval(double x) const;
  PiecewisePolynomial derivative() const;

  /// Drops leading/trailing pieces whose coefficients are all below
  /// rel_tol * max coefficient, then forces value and slope to zero at the
  /// new support ends by a minimal-norm coefficient correction.
  PiecewisePolynomial truncated_support(double rel_tol) const;

  double max_abs_coefficient() const;

 private:
  std::vector<double> bp_;
  std::vector<std::vector<double>> pieces_;
};

double inner_product(const PiecewisePolynomial& f, const PiecewisePolynomial& g);
double moment(const PiecewisePolynomial& f, int q);
double integral(const PiecewisePolynomial& f);

/// sum_i c[i] * f[i] over the union of supports.
PiecewisePolynomial linear_combination(std::span<const PiecewisePolynomial> f, std::span<const double> c);

/// Re-expand f on the given breakpoint grid (must refine f's own grid over its support).
PiecewisePolynomial reexpand(const PiecewisePolynomial& f, const std::vector<double>& grid);

}  // namespace stlr
