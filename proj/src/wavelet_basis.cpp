#include "stlr/wavelet_basis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "stlr/dense_linalg.hpp"

namespace stlr {

namespace {

// Knot span index of cell c for the clamped C^1 knot vector.
int cell_span(int p, int c) { return p + c * (p - 1); }

// NURBS-style basis function evaluation: values of the p+1 B-splines that are
// nonzero on the span i at parameter u.
void basis_funs(int i, double u, int p, const std::vector<double>& knots, std::vector<double>& out) {
  out.assign(p + 1, 0.0);
  std::vector<double> left(p + 1, 0.0), right(p + 1, 0.0);
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - knots[i + 1 - j];
    right[j] = knots[i + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace

std::vector<PiecewisePolynomial> c1_spline_basis(int p, int n, double L, bool dirichlet) {
  if (p < 2) throw std::invalid_argument("c1_spline_basis: order must be >= 2");
  std::vector<double> knots;
  for (int i = 0; i <= p; ++i) knots.push_back(0.0);
  const double h = L / n;
  for (int c = 1; c < n; ++c)
    for (int r = 0; r < p - 1; ++r) knots.push_back(c * h);
  for (int i = 0; i <= p; ++i) knots.push_back(L);
  const int nb = static_cast<int>(knots.size()) - p - 1;

  const GaussRule& rule = gauss_rule(p + 1);
  const int nq = static_cast<int>(rule.nodes.size());

  // values[j] : cell -> node values
  std::vector<std::map<int, std::vector<double>>> values(nb);
  std::vector<double> funs;
  for (int c = 0; c < n; ++c) {
    const int span = cell_span(p, c);
    const double a = c * h, b = (c + 1) * h;
    for (int q = 0; q < nq; ++q) {
      const double x = 0.5 * (a + b) + 0.5 * (b - a) * rule.nodes[q];
      basis_funs(span, x, p, knots, funs);
      for (int r = 0; r <= p; ++r) {
        const int j = span - p + r;
        auto& cell_vals = values[j][c];
        if (cell_vals.empty()) cell_vals.assign(nq, 0.0);
        cell_vals[q] = funs[r];
      }
    }
  }

  std::vector<PiecewisePolynomial> out;
  for (int j = 0; j < nb; ++j) {
    if (dirichlet && (j == 0 || j == nb - 1)) continue;
    if (values[j].empty()) continue;
    const int c0 = values[j].begin()->first;
    const int c1 = values[j].rbegin()->first;
    std::vector<double> bp;
    std::vector<std::vector<double>> pieces;
    for (int c = c0; c <= c1; ++c) {
      bp.push_back(c * h);
      auto it = values[j].find(c);
      std::vector<double> vals = (it != values[j].end()) ? it->second : std::vector<double>(nq, 0.0);
      // project node values onto Legendre coefficients (exact for degree <= p)
      std::vector<double> coeff(p + 1, 0.0);
      for (int qd = 0; qd <= p; ++qd) {
        double s = 0.0;
        for (int q = 0; q < nq; ++q) {
          double p0 = 1.0, p1 = rule.nodes[q], pq = 1.0;
          if (qd >= 1) pq = p1;
          for (int k = 2; k <= qd; ++k) {
            const double p2 = ((2.0 * k - 1.0) * rule.nodes[q] * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
            pq = p2;
          }
          s += rule.weights[q] * vals[q] * pq;
        }
        coeff[qd] = s * (2.0 * qd + 1.0) / 2.0;
      }
      pieces.push_back(std::move(coeff));
    }
    bp.push_back((c1 + 1) * h);
    out.emplace_back(std::move(bp), std::move(pieces));
  }
  return out;
}

namespace {

bool supports_overlap(const PiecewisePolynomial& f, const PiecewisePolynomial& g, double tol) {
  return f.support_left() < g.support_right() - tol && g.support_left() < f.support_right() - tol;
}

Matrix gram_matrix(const std::vector<PiecewisePolynomial>& f, double tol) {
  const std::size_t n = f.size();
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      if (!supports_overlap(f[i], f[j], tol)) continue;
      const double v = inner_product(f[i], f[j]);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

// symmetric inverse square root, with a conditioning guard
Matrix loewdin_weights(const Matrix& g) {
  EigResult e = sym_eig(g);
  const double lmax = e.lambda.front();
  if (e.lambda.back() <= 1e-10 * lmax)
    throw std::runtime_error("multiwavelet construction: pre-wavelet frame is rank deficient");
  const std::size_t n = g.rows();
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += e.q(i, k) * e.q(j, k) / std::sqrt(e.lambda[k]);
      w(i, j) = s;
    }
  return w;
}

struct PreWavelet {
  std::vector<double> coeff;  // over the fine spline basis
  double cell_lo = 0.0, cell_hi = 0.0;
  double mid = 0.0, width = 0.0;
};

}  // namespace

MultiwaveletBasis::MultiwaveletBasis(BasisKind kind, int order, double length, int max_level)
    : kind_(kind), order_(order), length_(length), max_level_(max_level) {}

std::shared_ptr<const MultiwaveletBasis> MultiwaveletBasis::build(BasisKind kind, int order, double length,
                                                                  int max_level) {
  if (order < 2) throw std::invalid_argument("MultiwaveletBasis: unsupported order (need order >= 2)");
  if (length <= 0.0) throw std::invalid_argument("MultiwaveletBasis: interval length must be positive");
  if (max_level < 0 || max_level > 12) throw std::invalid_argument("MultiwaveletBasis: max_level out of range");

  static std::map<std::tuple<int, int, double, int>, std::shared_ptr<const MultiwaveletBasis>> cache;
  static std::mutex mtx;
  const auto key = std::make_tuple(static_cast<int>(kind), order, length, max_level);
  {
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  std::shared_ptr<MultiwaveletBasis> basis(new MultiwaveletBasis(kind, order, length, max_level));
  basis->construct();
  std::lock_guard<std::mutex> lock(mtx);
  auto [it, inserted] = cache.emplace(key, basis);
  return it->second;
}

void MultiwaveletBasis::build_level0() {
  const bool dir = (kind_ == BasisKind::SpatialDirichlet);
  auto base = c1_spline_basis(order_, 1, length_, dir);
  const double tol = 1e-12 * length_;
  Matrix g = gram_matrix(base, tol);
  Matrix w = loewdin_weights(g);
  for (std::size_t t = 0; t < base.size(); ++t) {
    std::vector<double> c(base.size());
    for (std::size_t s = 0; s < base.size(); ++s) c[s] = w(s, t);
    fn_.push_back(linear_combination(base, c));
  }
}

void MultiwaveletBasis::build_wavelet_level(int level) {
  const bool dir = (kind_ == BasisKind::SpatialDirichlet);
  const int p = order_;
  const int n = 1 << (level - 1);
  const double h = length_ / n;
  const double tol = 1e-9 * h;

  auto fine = c1_spline_basis(p, 2 * n, length_, dir);
  auto coarse = c1_spline_basis(p, n, length_, dir);
  const std::size_t nf = fine.size(), nc = coarse.size();
  const int target = n * (p - 1);

  Matrix gf = gram_matrix(fine, tol);
  Matrix mcf(nc, nf);
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t j = 0; j < nf; ++j)
      if (supports_overlap(coarse[i], fine[j], tol)) mcf(i, j) = inner_product(coarse[i], fine[j]);

  auto quad_form = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < nf; ++i) {
      if (a[i] == 0.0) continue;
      double row = 0.0;
      for (std::size_t j = 0; j < nf; ++j)
        if (b[j] != 0.0) row += gf(i, j) * b[j];
      s += a[i] * row;
    }
    return s;
  };

  std::vector<PreWavelet> selected;
  for (int w = 1; w <= n && static_cast<int>(selected.size()) < target; ++w) {
    for (int c = 0; c + w <= n; ++c) {
      const double win_l = c * h, win_r = (c + w) * h;
      std::vector<std::size_t> fidx;
      for (std::size_t j = 0; j < nf; ++j)
        if (fine[j].support_left() >= win_l - tol && fine[j].support_right() <= win_r + tol) fidx.push_back(j);
      if (fidx.empty()) continue;
      std::vector<std::size_t> cidx;
      for (std::size_t i = 0; i < nc; ++i)
        if (coarse[i].support_left() < win_r - tol && coarse[i].support_right() > win_l + tol) cidx.push_back(i);

      Matrix mloc(cidx.size(), fidx.size());
      for (std::size_t a = 0; a < cidx.size(); ++a)
        for (std::size_t b = 0; b < fidx.size(); ++b) mloc(a, b) = mcf(cidx[a], fidx[b]);
      Matrix nul = nullspace(mloc, 1e-10);
      if (nul.cols() == 0) continue;

      std::vector<std::vector<double>> cand(nul.cols(), std::vector<double>(nf, 0.0));
      for (std::size_t k = 0; k < nul.cols(); ++k)
        for (std::size_t b = 0; b < fidx.size(); ++b) cand[k][fidx[b]] = nul(b, k);

      // subtract everything already selected whose support lies inside the window
      std::vector<std::size_t> prev;
      for (std::size_t s = 0; s < selected.size(); ++s)
        if (selected[s].cell_lo >= c - 1e-9 && selected[s].cell_hi <= c + w + 1e-9) prev.push_back(s);
      if (!prev.empty()) {
        Matrix gp(prev.size(), prev.size());
        for (std::size_t a = 0; a < prev.size(); ++a)
          for (std::size_t b = a; b < prev.size(); ++b) {
            const double v = quad_form(selected[prev[a]].coeff, selected[prev[b]].coeff);
            gp(a, b) = v;
            gp(b, a) = v;
          }
        Matrix lp = cholesky(gp);
        for (auto& ck : cand) {
          std::vector<double> rhs(prev.size());
          for (std::size_t a = 0; a < prev.size(); ++a) rhs[a] = quad_form(selected[prev[a]].coeff, ck);
          auto y = cholesky_solve(lp, rhs);
          for (std::size_t a = 0; a < prev.size(); ++a)
            for (std::size_t i = 0; i < nf; ++i) ck[i] -= y[a] * selected[prev[a]].coeff[i];
        }
      }

      Matrix s(cand.size(), cand.size());
      double scale = 0.0;
      for (std::size_t a = 0; a < cand.size(); ++a) {
        for (std::size_t b = a; b < cand.size(); ++b) {
          const double v = quad_form(cand[a], cand[b]);
          s(a, b) = v;
          s(b, a) = v;
        }
        scale = std::max(scale, s(a, a));
      }
      // rescue the scale reference when everything was projected away
      for (std::size_t k = 0; k < nul.cols(); ++k) scale = std::max(scale, 1e-6 * h);
      EigResult es = sym_eig(s);
      for (std::size_t k = 0; k < cand.size(); ++k) {
        if (es.lambda[k] <= 1e-12 * scale) break;
        if (static_cast<int>(selected.size()) >= target) break;
        PreWavelet pw;
        pw.coeff.assign(nf, 0.0);
        const double inv = 1.0 / std::sqrt(es.lambda[k]);
        for (std::size_t a = 0; a < cand.size(); ++a)
          for (std::size_t i = 0; i < nf; ++i) pw.coeff[i] += es.q(a, k) * cand[a][i] * inv;
        // deterministic sign
        std::size_t imax = 0;
        for (std::size_t i = 1; i < nf; ++i)
          if (std::abs(pw.coeff[i]) > std::abs(pw.coeff[imax])) imax = i;
        if (pw.coeff[imax] < 0.0)
          for (double& v : pw.coeff) v = -v;
        double lo = 1e300, hi = -1e300;
        const double cmax = std::abs(pw.coeff[imax]);
        for (std::size_t i = 0; i < nf; ++i) {
          if (std::abs(pw.coeff[i]) <= 1e-12 * cmax) continue;
          lo = std::min(lo, fine[i].support_left());
          hi = std::max(hi, fine[i].support_right());
        }
        pw.cell_lo = lo / h;
        pw.cell_hi = hi / h;
        pw.mid = 0.5 * (lo + hi);
        pw.width = hi - lo;
        selected.push_back(std::move(pw));
      }
    }
  }
  if (static_cast<int>(selected.size()) != target)
    throw std::runtime_error("multiwavelet construction: level " + std::to_string(level) + " is incomplete");

  std::vector<std::size_t> order(selected.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (selected[a].mid != selected[b].mid) return selected[a].mid < selected[b].mid;
    return selected[a].width < selected[b].width;
  });

  Matrix c(nf, selected.size());
  for (std::size_t t = 0; t < order.size(); ++t)
    for (std::size_t i = 0; i < nf; ++i) c(i, t) = selected[order[t]].coeff[i];

  // symmetric within-level orthonormalization
  Matrix gw = matmul_at_b(c, matmul(gf, c));
  Matrix w = loewdin_weights(gw);
  Matrix f = matmul(c, w);

  for (std::size_t t = 0; t < order.size(); ++t) {
    double cmax = 0.0;
    for (std::size_t i = 0; i < nf; ++i) cmax = std::max(cmax, std::abs(f(i, t)));
    std::vector<PiecewisePolynomial> parts;
    std::vector<double> coeffs;
    for (std::size_t i = 0; i < nf; ++i) {
      if (std::abs(f(i, t)) <= 1e-13 * cmax) continue;
      parts.push_back(fine[i]);
      coeffs.push_back(f(i, t));
    }
    fn_.push_back(linear_combination(parts, coeffs).truncated_support(1e-13));
  }
}

void MultiwaveletBasis::construct() {
  level_offset_.assign(max_level_ + 2, 0);
  build_level0();
  level_offset_[1] = static_cast<int>(fn_.size());
  for (int l = 1; l <= max_level_; ++l) {
    build_wavelet_level(l);
    level_offset_[l + 1] = static_cast<int>(fn_.size());
  }

  dfn_.reserve(fn_.size());
  h1_semi_.reserve(fn_.size());
  min_h1_semi_ = 1e300;
  for (std::size_t i = 0; i < fn_.size(); ++i) {
    dfn_.push_back(fn_[i].derivative());
    const double semi = inner_product(dfn_[i], dfn_[i]);
    h1_semi_.push_back(semi);
    min_h1_semi_ = std::min(min_h1_semi_, semi);
    val0_.push_back(fn_[i].eval(0.0));
    valend_.push_back(fn_[i].eval(length_));
  }
  for (int l = 1; l <= max_level_; ++l) {
    for (int o = level_offset_[l]; o < level_offset_[l + 1]; ++o) {
      const double diam = fn_[o].support_right() - fn_[o].support_left();
      support_constant_ = std::max(support_constant_, diam * std::pow(2.0, l) / length_);
    }
  }
}

int MultiwaveletBasis::level_count(int level) const {
  if (level < 0 || level > max_level_) return 0;
  return level_offset_[level + 1] - level_offset_[level];
}

int MultiwaveletBasis::level_offset(int level) const { return level_offset_[level]; }

int MultiwaveletBasis::positions(int level) const {
  if (level == 0) return level_count(0);
  return 1 << (level - 1);
}

int MultiwaveletBasis::multiplicity(int level) const {
  if (level == 0) return 1;
  return order_ - 1;
}

bool MultiwaveletBasis::constructible(const WaveletIndex& idx) const {
  if (idx.level < 0 || idx.level > max_level_) return false;
  if (idx.translation < 0 || idx.translation >= positions(idx.level)) return false;
  if (idx.generator < 0 || idx.generator >= multiplicity(idx.level)) return false;
  return true;
}

int MultiwaveletBasis::flat_index(const WaveletIndex& idx) const {
  if (!constructible(idx)) throw std::invalid_argument("MultiwaveletBasis: index not constructible");
  return level_offset_[idx.level] + idx.translation * multiplicity(idx.level) + idx.generator;
}

WaveletIndex MultiwaveletBasis::unflatten(int ordinal) const {
  if (ordinal < 0 || ordinal >= size()) throw std::invalid_argument("MultiwaveletBasis: ordinal out of range");
  int level = 0;
  while (level < max_level_ && ordinal >= level_offset_[level + 1]) ++level;
  const int within = ordinal - level_offset_[level];
  const int mult = multiplicity(level);
  return WaveletIndex{level, within / mult, within % mult};
}

int MultiwaveletBasis::level_of(int ordinal) const {
  int level = 0;
  while (level < max_level_ && ordinal >= level_offset_[level + 1]) ++level;
  return level;
}

double MultiwaveletBasis::evaluate(int ordinal, double x) const {
  if (x < 0.0 || x > length_) throw std::domain_error("MultiwaveletBasis: evaluation point outside the interval");
  return fn_[ordinal].eval(x);
}

}  // namespace stlr
