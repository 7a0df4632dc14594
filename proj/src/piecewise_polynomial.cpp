#include "stlr/piecewise_polynomial.hpp"

#include "stlr/dense_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace stlr {

const GaussRule& gauss_rule(int n) {
  static std::map<int, GaussRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // Newton iteration from the Chebyshev estimate.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    rule.nodes[n - 1 - i] = x;
    rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

double legendre_eval(std::span<const double> c, double t) {
  if (c.empty()) return 0.0;
  long double sum = c[0];
  long double p0 = 1.0L, p1 = t;
  if (c.size() > 1) sum += c[1] * p1;
  for (std::size_t k = 2; k < c.size(); ++k) {
    const long double p2 = ((2.0L * k - 1.0L) * t * p1 - (k - 1.0L) * p0) / k;
    sum += c[k] * p2;
    p0 = p1;
    p1 = p2;
  }
  return static_cast<double>(sum);
}

namespace {

// P_q'(t) expanded in Legendre: P_n' = sum_{k<n, n-k odd} (2k+1) P_k.
std::vector<double> legendre_derivative_coeffs(std::span<const double> c) {
  const int deg = static_cast<int>(c.size()) - 1;
  if (deg <= 0) return {};
  std::vector<double> d(deg, 0.0);
  for (int n = 1; n <= deg; ++n) {
    if (c[n] == 0.0) continue;
    for (int k = n - 1; k >= 0; k -= 2) d[k] += (2.0 * k + 1.0) * c[n];
  }
  return d;
}

std::vector<double> project_to_legendre(const std::vector<double>& values, const GaussRule& rule, int deg) {
  // values sampled at rule.nodes; exact when the sampled function has degree <= deg
  std::vector<double> c(deg + 1, 0.0);
  const int n = static_cast<int>(rule.nodes.size());
  for (int q = 0; q <= deg; ++q) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      double p0 = 1.0, p1 = rule.nodes[j];
      double pq = (q == 0) ? 1.0 : p1;
      for (int k = 2; k <= q; ++k) {
        const double p2 = ((2.0 * k - 1.0) * rule.nodes[j] * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
        pq = p2;
      }
      s += rule.weights[j] * values[j] * pq;
    }
    c[q] = s * (2.0 * q + 1.0) / 2.0;
  }
  return c;
}

}  // namespace

PiecewisePolynomial::PiecewisePolynomial(std::vector<double> breakpoints, std::vector<std::vector<double>> pieces)
    : bp_(std::move(breakpoints)), pieces_(std::move(pieces)) {
  if (!pieces_.empty() && bp_.size() != pieces_.size() + 1)
    throw std::invalid_argument("PiecewisePolynomial: breakpoint/piece count mismatch");
}

double PiecewisePolynomial::eval(double x) const {
  if (pieces_.empty() || x < bp_.front() || x > bp_.back()) return 0.0;
  auto it = std::upper_bound(bp_.begin(), bp_.end(), x);
  std::size_t i = (it == bp_.begin()) ? 0 : static_cast<std::size_t>(it - bp_.begin()) - 1;
  if (i >= pieces_.size()) i = pieces_.size() - 1;
  const double a = bp_[i], b = bp_[i + 1];
  const double t = 2.0 * (x - a) / (b - a) - 1.0;
  return legendre_eval(pieces_[i], t);
}

PiecewisePolynomial PiecewisePolynomial::derivative() const {
  std::vector<std::vector<double>> dp(pieces_.size());
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    dp[i] = legendre_derivative_coeffs(pieces_[i]);
    const double scale = 2.0 / (bp_[i + 1] - bp_[i]);
    for (double& v : dp[i]) v *= scale;
    if (dp[i].empty()) dp[i] = {0.0};
  }
  return PiecewisePolynomial(bp_, std::move(dp));
}

double PiecewisePolynomial::max_abs_coefficient() const {
  double m = 0.0;
  for (const auto& p : pieces_)
    for (double v : p) m = std::max(m, std::abs(v));
  return m;
}

namespace {

// value and x-slope of a Legendre piece at local coordinate t
void piece_data(const std::vector<double>& c, double t, double width, double& val, double& slope) {
  val = legendre_eval(c, t);
  auto dc = legendre_derivative_coeffs(c);
  slope = legendre_eval(dc, t) * 2.0 / width;
}

// Subtracts a C^1 correction supported on the two outermost pieces so that the
// function vanishes with zero slope at the (new) support end, without creating
// jumps at interior breakpoints.
void blend_zero_end(std::vector<std::vector<double>>& pieces, const std::vector<double>& bp, bool left) {
  const std::size_t np = pieces.size();
  const std::size_t i0 = left ? 0 : np - 1;
  const double w0 = left ? bp[1] - bp[0] : bp[np] - bp[np - 1];
  const double t_out = left ? -1.0 : 1.0;

  double fv, fs;
  piece_data(pieces[i0], t_out, w0, fv, fs);
  if (fv == 0.0 && fs == 0.0) return;

  if (np == 1) {
    // single piece: minimal-norm correction for the two end conditions
    const int n = static_cast<int>(pieces[i0].size());
    std::vector<double> e(n), de(n);
    for (int q = 0; q < n; ++q) {
      std::vector<double> unit(q + 1, 0.0);
      unit[q] = 1.0;
      double v, s;
      piece_data(unit, t_out, w0, v, s);
      e[q] = v;
      de[q] = s;
    }
    double a11 = 0, a12 = 0, a22 = 0;
    for (int q = 0; q < n; ++q) {
      a11 += e[q] * e[q];
      a12 += e[q] * de[q];
      a22 += de[q] * de[q];
    }
    const double det = a11 * a22 - a12 * a12;
    if (det <= 0.0) return;
    const double y1 = (a22 * fv - a12 * fs) / det;
    const double y2 = (-a12 * fv + a11 * fs) / det;
    for (int q = 0; q < n; ++q) pieces[i0][q] -= e[q] * y1 + de[q] * y2;
    return;
  }

  const std::size_t i1 = left ? 1 : np - 2;
  const double w1 = left ? bp[2] - bp[1] : bp[np - 1] - bp[np - 2];
  const int n0 = static_cast<int>(pieces[i0].size());
  const int n1 = static_cast<int>(pieces[i1].size());
  const int nv = n0 + n1;

  // rows: outer value, outer slope, join value, join slope, inner value, inner slope
  Matrix m(6, nv);
  auto fill = [&](int col0, int n, double width, double t, int row_v, int row_s, double sign) {
    for (int q = 0; q < n; ++q) {
      std::vector<double> unit(q + 1, 0.0);
      unit[q] = 1.0;
      double v, s;
      piece_data(unit, t, width, v, s);
      m(row_v, col0 + q) += sign * v;
      m(row_s, col0 + q) += sign * s;
    }
  };
  const double t_join0 = left ? 1.0 : -1.0;  // joint seen from the outer piece
  const double t_join1 = left ? -1.0 : 1.0;  // joint seen from the second piece
  const double t_inner = left ? 1.0 : -1.0;  // inner end of the second piece
  fill(0, n0, w0, t_out, 0, 1, 1.0);
  fill(0, n0, w0, t_join0, 2, 3, 1.0);
  fill(n0, n1, w1, t_join1, 2, 3, -1.0);
  fill(n0, n1, w1, t_inner, 4, 5, 1.0);

  std::vector<double> rhs = {fv, fs, 0.0, 0.0, 0.0, 0.0};
  // minimal-norm solve via the 6x6 normal equations
  Matrix mmt(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      double s = 0.0;
      for (int k = 0; k < nv; ++k) s += m(i, k) * m(j, k);
      mmt(i, j) = s;
    }
  Matrix l;
  try {
    l = cholesky(mmt);
  } catch (const std::runtime_error&) {
    return;
  }
  auto y = cholesky_solve(l, rhs);
  for (int q = 0; q < n0; ++q) {
    double corr = 0.0;
    for (int i = 0; i < 6; ++i) corr += m(i, q) * y[i];
    pieces[i0][q] -= corr;
  }
  for (int q = 0; q < n1; ++q) {
    double corr = 0.0;
    for (int i = 0; i < 6; ++i) corr += m(i, n0 + q) * y[i];
    pieces[i1][q] -= corr;
  }
}

}  // namespace

PiecewisePolynomial PiecewisePolynomial::truncated_support(double rel_tol) const {
  if (pieces_.empty()) return *this;
  const double tol = rel_tol * max_abs_coefficient();
  auto piece_small = [&](std::size_t i) {
    for (double v : pieces_[i])
      if (std::abs(v) > tol) return false;
    return true;
  };
  std::size_t lo = 0, hi = pieces_.size();
  while (lo < hi && piece_small(lo)) ++lo;
  while (hi > lo && piece_small(hi - 1)) --hi;
  if (lo >= hi) return PiecewisePolynomial();

  std::vector<double> bp(bp_.begin() + lo, bp_.begin() + hi + 1);
  std::vector<std::vector<double>> pieces(pieces_.begin() + lo, pieces_.begin() + hi);

  if (lo > 0) blend_zero_end(pieces, bp, true);
  if (hi < pieces_.size()) blend_zero_end(pieces, bp, false);
  return PiecewisePolynomial(std::move(bp), std::move(pieces));
}

double inner_product(const PiecewisePolynomial& f, const PiecewisePolynomial& g) {
  if (f.empty() || g.empty()) return 0.0;
  const double lo = std::max(f.support_left(), g.support_left());
  const double hi = std::min(f.support_right(), g.support_right());
  if (lo >= hi) return 0.0;
  const double eps = 1e-13 * std::max({1.0, std::abs(lo), std::abs(hi)});

  int degf = 0, degg = 0;
  for (const auto& p : f.pieces()) degf = std::max<int>(degf, static_cast<int>(p.size()) - 1);
  for (const auto& p : g.pieces()) degg = std::max<int>(degg, static_cast<int>(p.size()) - 1);
  const GaussRule& rule = gauss_rule((degf + degg) / 2 + 1);

  const auto& fb = f.breakpoints();
  const auto& gb = g.breakpoints();
  std::size_t fi = 0, gi = 0;
  while (fi + 1 < fb.size() && fb[fi + 1] <= lo + eps) ++fi;
  while (gi + 1 < gb.size() && gb[gi + 1] <= lo + eps) ++gi;

  long double total = 0.0L;
  double x = lo;
  while (x < hi - eps && fi < f.piece_count() && gi < g.piece_count()) {
    const double b = std::min({fb[fi + 1], gb[gi + 1], hi});
    const double mid = 0.5 * (x + b), half = 0.5 * (b - x);
    if (half > eps) {
      const double fa = fb[fi], fw = fb[fi + 1] - fb[fi];
      const double ga = gb[gi], gw = gb[gi + 1] - gb[gi];
      long double s = 0.0L;
      for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
        const double xx = mid + half * rule.nodes[j];
        const double tf = 2.0 * (xx - fa) / fw - 1.0;
        const double tg = 2.0 * (xx - ga) / gw - 1.0;
        s += static_cast<long double>(rule.weights[j]) *
             static_cast<long double>(legendre_eval(f.pieces()[fi], tf)) *
             static_cast<long double>(legendre_eval(g.pieces()[gi], tg));
      }
      total += s * static_cast<long double>(half);
    }
    if (fb[fi + 1] <= b + eps) ++fi;
    if (gb[gi + 1] <= b + eps) ++gi;
    x = b;
  }
  return static_cast<double>(total);
}

double moment(const PiecewisePolynomial& f, int q) {
  if (f.empty()) return 0.0;
  int degf = 0;
  for (const auto& p : f.pieces()) degf = std::max<int>(degf, static_cast<int>(p.size()) - 1);
  const int npts = (degf + q) / 2 + 1;
  const GaussRule& rule = gauss_rule(npts);
  long double total = 0.0L;
  const auto& bp = f.breakpoints();
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    const double mid = 0.5 * (bp[i] + bp[i + 1]), half = 0.5 * (bp[i + 1] - bp[i]);
    long double s = 0.0L;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double x = mid + half * rule.nodes[j];
      s += static_cast<long double>(rule.weights[j]) * static_cast<long double>(std::pow(x, q)) *
           static_cast<long double>(f.eval(x));
    }
    total += s * static_cast<long double>(half);
  }
  return static_cast<double>(total);
}

double integral(const PiecewisePolynomial& f) { return moment(f, 0); }

PiecewisePolynomial linear_combination(std::span<const PiecewisePolynomial> f, std::span<const double> c) {
  if (f.size() != c.size()) throw std::invalid_argument("linear_combination: size mismatch");
  std::vector<double> grid;
  int deg = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].empty() || c[i] == 0.0) continue;
    for (double x : f[i].breakpoints()) grid.push_back(x);
    for (const auto& p : f[i].pieces()) deg = std::max<int>(deg, static_cast<int>(p.size()) - 1);
  }
  if (grid.empty()) return PiecewisePolynomial();
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-14 * std::max(1.0, std::abs(a)); }),
             grid.end());

  const GaussRule& rule = gauss_rule(deg + 1);
  std::vector<std::vector<double>> pieces(grid.size() - 1);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double mid = 0.5 * (grid[i] + grid[i + 1]), half = 0.5 * (grid[i + 1] - grid[i]);
    std::vector<double> values(rule.nodes.size(), 0.0);
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double x = mid + half * rule.nodes[j];
      double s = 0.0;
      for (std::size_t k = 0; k < f.size(); ++k)
        if (c[k] != 0.0) s += c[k] * f[k].eval(x);
      values[j] = s;
    }
    pieces[i] = project_to_legendre(values, rule, deg);
  }
  return PiecewisePolynomial(std::move(grid), std::move(pieces));
}

PiecewisePolynomial reexpand(const PiecewisePolynomial& f, const std::vector<double>& grid) {
  int deg = 0;
  for (const auto& p : f.pieces()) deg = std::max<int>(deg, static_cast<int>(p.size()) - 1);
  const GaussRule& rule = gauss_rule(deg + 1);
  std::vector<std::vector<double>> pieces(grid.size() - 1);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double mid = 0.5 * (grid[i] + grid[i + 1]), half = 0.5 * (grid[i + 1] - grid[i]);
    std::vector<double> values(rule.nodes.size());
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) values[j] = f.eval(mid + half * rule.nodes[j]);
    pieces[i] = project_to_legendre(values, rule, deg);
  }
  return PiecewisePolynomial(grid, std::move(pieces));
}

}  // namespace stlr
