#include "stlr/expsum.hpp"

#include <cmath>
#include <stdexcept>

#include "stlr/special_functions.hpp"

namespace stlr {

namespace {

double log1p_exp(double x) {
  // ln(1 + e^x), stable for both signs
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

double ExpSumScaling::eval(double s) const {
  double sum = 0.0;
  for (const ExpSumTerm& t : terms) {
    const double e = t.exponent * s;
    if (e > 745.0) continue;
    sum += t.weight * std::exp(-e);
  }
  return sum;
}

double step_size_x(double a, double delta) {
  return 2.0 * M_PI * M_PI / (3.0 * std::log(1.0 + 10.0 * (1.0 + std::sqrt(a)) / delta));
}

int nplus_x(double a, double delta, double h) {
  const double arg = std::pow(a, 0.25) * erfc_inverse(delta / 2.0);
  if (arg <= 1.0) return 0;
  return std::max(0, static_cast<int>(std::ceil(2.0 / h * std::log(arg))));
}

double weight_x(double a, double x) {
  const double z = std::exp(0.5 * x);
  return std::pow(M_PI, -0.5) * std::pow(a, -0.25) * (1.0 - 2.0 * z * dawson(z)) * z;
}

double exponent_x(double a, double x) { return std::exp(x) / std::sqrt(a); }

ExpSumScaling build_expsum_x(double a, double delta, int n) {
  if (a <= 0.0 || delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("build_expsum_x: bad parameters");
  ExpSumScaling es;
  es.flavor = ExpSumScaling::Flavor::X;
  es.a = a;
  es.delta = delta;
  es.h = step_size_x(a, delta);
  es.n_minus = n;
  es.n_plus = nplus_x(a, delta, es.h);
  for (int k = -n; k <= es.n_plus; ++k) {
    const double x = k * es.h;
    es.terms.push_back({es.h * weight_x(a, x), exponent_x(a, x)});
  }
  return es;
}

double f_x(double a, double s, double y) {
  const double a4 = std::pow(a, 0.25);
  const double e1 = (s / std::sqrt(a)) * std::exp(-y);
  const double lead = (e1 > 700.0) ? 0.0 : 2.0 * a4 / std::sqrt(s * M_PI) * std::exp(-e1) * dawson(std::exp(-0.5 * y));
  return lead + std::erf(std::sqrt(s) / a4 * std::exp(-0.5 * y));
}

int m_x(double a, double eta, double K, double delta) {
  const double h = step_size_x(a, delta);
  const double target = std::min(delta / 2.0, eta);
  const int cap = static_cast<int>(m_x_closed_bound(a, eta, K, delta)) + 8;
  for (int n = 0; n <= cap; ++n) {
    const double y = h * n;
    if (std::max(f_x(a, 1.0, y), f_x(a, K, y)) <= target) return n;
  }
  throw std::runtime_error("m_x: scan exceeded the closed-form bound");
}

double m_x_closed_bound(double a, double eta, double K, double delta) {
  const double h = step_size_x(a, delta);
  const double c = std::log(4.0 / std::sqrt(M_PI));
  const double t = std::abs(std::log(std::min(delta / 2.0, eta)));
  return 1.0 + 2.0 / h * (c + t + 0.25 * std::log(a) + 0.5 * std::max(0.0, std::log(K) - std::log(a)));
}

int positivity_threshold_x(double a, double delta) {
  const double h = step_size_x(a, delta);
  return static_cast<int>(std::ceil(2.0 / h * std::log(4.0 / 3.0)));
}

double step_size_y(double delta) { return M_PI * M_PI / (5.0 * (std::abs(std::log(delta / 2.0)) + 4.0)); }

int nplus_y(double delta, double h) {
  const double m = std::max(4.0 / std::sqrt(M_PI), std::sqrt(std::abs(std::log(delta / 2.0))));
  return static_cast<int>(std::ceil(m / h));
}

ExpSumScaling build_expsum_y(double delta, int n) {
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("build_expsum_y: bad parameters");
  ExpSumScaling es;
  es.flavor = ExpSumScaling::Flavor::Y;
  es.delta = delta;
  es.h = step_size_y(delta);
  es.n_minus = n;
  es.n_plus = nplus_y(delta, es.h);
  for (int k = -n; k <= es.n_plus; ++k) {
    const double x = k * es.h;
    const double l = log1p_exp(x);
    // weight (1 + e^{-x})^{-1}: the substitution u = ln(1+e^x) in the
    // Gaussian integral for 1/sqrt(t) produces exactly this density
    es.terms.push_back({es.h * 2.0 / std::sqrt(M_PI) / (1.0 + std::exp(-x)), l * l});
  }
  return es;
}

int m_y(double eta, double K, double delta, double h) {
  const double v = (std::log(2.0 / std::sqrt(M_PI)) + std::abs(std::log(std::min(delta / 2.0, eta))) +
                    0.5 * std::log(K)) /
                   h;
  return std::max(0, static_cast<int>(std::ceil(v)));
}

SweepResult certify_x(double a, double delta, double K, int n, int grid_points) {
  ExpSumScaling es = build_expsum_x(a, delta, n);
  SweepResult out;
  out.points = grid_points;
  const double lk = std::log(K);
  for (int i = 0; i < grid_points; ++i) {
    const double s = std::exp(lk * i / (grid_points - 1.0));
    const double target = std::sqrt(s) / (s + std::sqrt(a));
    const double rel = std::abs(es.eval(s) - target) / target;
    out.max_rel_err = std::max(out.max_rel_err, rel);
  }
  return out;
}

SweepResult certify_y(double delta, double K, int n, int grid_points) {
  ExpSumScaling es = build_expsum_y(delta, n);
  SweepResult out;
  out.points = grid_points;
  const double lk = std::log(K);
  for (int i = 0; i < grid_points; ++i) {
    const double t = std::exp(lk * i / (grid_points - 1.0));
    const double target = 1.0 / std::sqrt(t);
    const double rel = std::abs(es.eval(t) - target) / target;
    out.max_rel_err = std::max(out.max_rel_err, rel);
  }
  return out;
}

}  // namespace stlr
