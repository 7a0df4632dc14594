#pragma once

#include <vector>

namespace stlr {

struct ExpSumTerm {
  double weight;    // h * w(kh)
  double exponent;  // alpha(kh)
};

/// Separable approximation of a diagonal scaling: sum_k weight_k e^{-exponent_k s}.
struct ExpSumScaling {
  enum class Flavor { X, Y };
  Flavor flavor = Flavor::X;
  double a = 0.0;  // X flavor parameter; unused for Y
  double delta = 0.0;
  double h = 0.0;
  int n_minus = 0, n_plus = 0;
  std::vector<ExpSumTerm> terms;

  int term_count() const { return static_cast<int>(terms.size()); }
  double eval(double s) const;
};

// --- X flavor: approximates sqrt(s)/(s + sqrt(a)) on [1, inf) -------------

/// Upper-bound step size 2 pi^2 / (3 ln(1 + 10 (1+sqrt(a))/delta)).
double step_size_x(double a, double delta);
int nplus_x(double a, double delta, double h);
double weight_x(double a, double x);
double exponent_x(double a, double x);
ExpSumScaling build_expsum_x(double a, double delta, int n);

/// Truncation indicator function controlling the tail of the sum.
double f_x(double a, double s, double y);

/// Minimal n with max{f(1, hn), f(K, hn)} <= min{delta/2, eta}, by direct scan.
int m_x(double a, double eta, double K, double delta);
/// Closed-form upper bound for m_x.
double m_x_closed_bound(double a, double eta, double K, double delta);
/// Smallest n for which all weights at negative offsets are nonnegative,
/// ceil((2/h) ln(4/3)).
int positivity_threshold_x(double a, double delta);

// --- Y flavor: approximates 1/sqrt(t) on [1, inf) -------------------------

double step_size_y(double delta);
int nplus_y(double delta, double h);
ExpSumScaling build_expsum_y(double delta, int n);
int m_y(double eta, double K, double delta, double h);

// --- certification ---------------------------------------------------------

struct SweepResult {
  double max_rel_err = 0.0;
  int points = 0;
};

/// Max relative deviation of the X sum from sqrt(s)/(s+sqrt(a)) on a log grid
/// of [1, K].
SweepResult certify_x(double a, double delta, double K, int n, int grid_points = 10000);
/// Max relative deviation of the Y sum from 1/sqrt(t) on a log grid of [1, K].
SweepResult certify_y(double delta, double K, int n, int grid_points = 10000);

}  // namespace stlr
