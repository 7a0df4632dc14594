#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stlr/dense_linalg.hpp"
#include "stlr/wavelet_basis.hpp"
#include "stlr/wavelet_operator.hpp"

using namespace stlr;

namespace {

// composite Gauss quadrature on a fine uniform grid, independent of the
// piecewise structure
double quad_oracle(const PiecewisePolynomial& f, const PiecewisePolynomial& g, int cells) {
  const GaussRule& rule = gauss_rule(12);
  const double lo = std::min(f.support_left(), g.support_left());
  const double hi = std::max(f.support_right(), g.support_right());
  long double total = 0.0L;
  for (int c = 0; c < cells; ++c) {
    const double a = lo + (hi - lo) * c / cells, b = lo + (hi - lo) * (c + 1) / cells;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double x = mid + half * rule.nodes[q];
      total += (long double)(rule.weights[q] * half) * (long double)f.eval(x) * (long double)g.eval(x);
    }
  }
  return (double)total;
}

}  // namespace

TEST_CASE("gram identity up to level 4 for both kinds and orders 2,3") {
  for (int order : {2, 3}) {
    for (auto kind : {BasisKind::Temporal, BasisKind::SpatialDirichlet}) {
      auto basis = MultiwaveletBasis::build(kind, order, 1.0, 4);
      double worst = 0.0;
      for (int i = 0; i < basis->size(); ++i)
        for (int j = i; j < basis->size(); ++j) {
          const double v = inner_product(basis->function(i), basis->function(j));
          worst = std::max(worst, std::abs(v - (i == j ? 1.0 : 0.0)));
        }
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("vanishing moments of interior wavelets") {
  // free basis: all wavelets have order+1 vanishing moments
  auto tb = MultiwaveletBasis::build(BasisKind::Temporal, 3, 1.0, 5);
  for (int level : {2, 4}) {
    const int pos = tb->positions(level) / 2;
    const int ord = tb->flat_index({level, pos, 0});
    for (int q = 0; q <= 3; ++q) CHECK(std::abs(moment(tb->function(ord), q)) <= 1e-10);
  }
  // Dirichlet: wavelets whose support is strictly interior
  auto sp = MultiwaveletBasis::build(BasisKind::SpatialDirichlet, 3, 1.0, 7);
  int tested = 0;
  for (int level : {6, 7}) {
    for (int g = 0; g < sp->multiplicity(level); ++g) {
      const int ord = sp->flat_index({level, sp->positions(level) / 2, g});
      const auto& f = sp->function(ord);
      if (f.support_left() <= 0.0 || f.support_right() >= 1.0) continue;
      ++tested;
      for (int q = 0; q <= 3; ++q) CHECK(std::abs(moment(f, q)) <= 1e-10);
    }
  }
  CHECK(tested >= 2);
}

TEST_CASE("normalization against composite quadrature oracle") {
  auto basis = MultiwaveletBasis::build(BasisKind::Temporal, 3, 1.0, 4);
  for (int ord : {0, basis->flat_index({2, 1, 0}), basis->flat_index({4, 3, 1})}) {
    const double v = quad_oracle(basis->function(ord), basis->function(ord), 640);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("evaluation") {
  auto sp = MultiwaveletBasis::build(BasisKind::SpatialDirichlet, 2, 1.0, 4);
  SUBCASE("dirichlet functions vanish at the endpoints") {
    for (int i = 0; i < sp->size(); ++i) {
      CHECK(std::abs(sp->evaluate(i, 0.0)) <= 1e-11);
      CHECK(std::abs(sp->evaluate(i, 1.0)) <= 1e-11);
    }
  }
  SUBCASE("zero outside the support") {
    const int ord = sp->flat_index({4, 7, 0});
    const auto& f = sp->function(ord);
    if (f.support_left() > 0.01) CHECK(sp->evaluate(ord, 0.5 * f.support_left()) == 0.0);
  }
  SUBCASE("domain error outside the interval") {
    CHECK_THROWS_AS(sp->evaluate(0, -0.1), std::domain_error);
    CHECK_THROWS_AS(sp->evaluate(0, 1.1), std::domain_error);
  }
  SUBCASE("matches an independent Horner evaluation of the stored coefficients") {
    const int ord = sp->flat_index({3, 2, 0});
    const auto& f = sp->function(ord);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(f.support_left(), f.support_right());
    for (int rep = 0; rep < 20; ++rep) {
      const double x = unif(rng);
      // locate the piece, convert Legendre to monomial in t, Horner it
      const auto& bp = f.breakpoints();
      std::size_t pi = 0;
      while (pi + 2 < bp.size() && bp[pi + 1] <= x) ++pi;
      const double t = 2.0 * (x - bp[pi]) / (bp[pi + 1] - bp[pi]) - 1.0;
      const auto& c = f.pieces()[pi];
      // monomial coefficients of sum c_q P_q via explicit low-degree expansions
      std::vector<double> mono(c.size(), 0.0);
      auto add = [&](int k, double v) { mono[k] += v; };
      for (std::size_t q = 0; q < c.size(); ++q) {
        switch (q) {
          case 0: add(0, c[q]); break;
          case 1: add(1, c[q]); break;
          case 2: add(0, -0.5 * c[q]); add(2, 1.5 * c[q]); break;
          case 3: add(1, -1.5 * c[q]); add(3, 2.5 * c[q]); break;
          default: REQUIRE(false);
        }
      }
      double horner = 0.0;
      for (std::size_t k = mono.size(); k-- > 0;) horner = horner * t + mono[k];
      CHECK(f.eval(x) == doctest::Approx(horner).epsilon(1e-12));
    }
  }
}

TEST_CASE("h1 norms") {
  auto basis = MultiwaveletBasis::build(BasisKind::Temporal, 3, 1.0, 6);
  SUBCASE("norm = 1 + seminorm for normalized functions") {
    for (int ord : {0, 5, basis->flat_index({3, 1, 1})})
      CHECK(basis->h1_norm_sq(ord) == doctest::Approx(1.0 + basis->h1_seminorm_sq(ord)));
  }
  SUBCASE("dyadic scaling of interior translates across levels") {
    for (int g = 0; g < 2; ++g) {
      const int a = basis->flat_index({5, 8, g});
      const int b = basis->flat_index({6, 16, g});
      const double ratio = basis->h1_seminorm_sq(a) / basis->h1_seminorm_sq(b);
      CHECK(ratio == doctest::Approx(0.25).epsilon(1e-6));
    }
  }
  SUBCASE("seminorm matches quadrature oracle") {
    const int ord = basis->flat_index({4, 2, 0});
    const double v = quad_oracle(basis->derivative(ord), basis->derivative(ord), 1280);
    CHECK(basis->h1_seminorm_sq(ord) == doctest::Approx(v).epsilon(1e-9));
  }
}

TEST_CASE("operator tables") {
  auto sp = MultiwaveletBasis::build(BasisKind::SpatialDirichlet, 2, 1.0, 5);
  auto tb = MultiwaveletBasis::build(BasisKind::Temporal, 2, 1.0, 5);
  auto t2 = WaveletOperator::build(sp, WaveletOperator::Kind::SpatialStiffness);
  auto tt = WaveletOperator::build(tb, WaveletOperator::Kind::TemporalDerivative);

  SUBCASE("stiffness symmetry") {
    for (int i = 0; i < t2->size(); i += 7)
      for (int j = 0; j < t2->size(); j += 5) CHECK(t2->entry(i, j) == t2->entry(j, i));
  }
  SUBCASE("integration by parts identity, all pairs") {
    double worst = 0.0;
    for (int i = 0; i < tt->size(); ++i)
      for (int j = 0; j < tt->size(); ++j) {
        const double lhs = tt->entry(i, j) + tt->entry(j, i);
        const double rhs = tb->value_at_end(i) * tb->value_at_end(j) - tb->value_at_0(i) * tb->value_at_0(j);
        worst = std::max(worst, std::abs(lhs - rhs));
      }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("disjoint supports give exact zeros") {
  auto tb = MultiwaveletBasis::build(BasisKind::Temporal, 3, 1.0, 7);
  auto tt = WaveletOperator::build(tb, WaveletOperator::Kind::TemporalDerivative);
  int found = 0;
  const int lo = tb->level_offset(7);
  for (int i = lo; i < tt->size() && found < 5; ++i)
    for (int j = lo; j < tt->size() && found < 5; ++j) {
      const auto& f = tb->function(i);
      const auto& g = tb->function(j);
      if (f.support_right() <= g.support_left() || g.support_right() <= f.support_left()) {
        CHECK(tt->entry(i, j) == 0.0);
        ++found;
      }
    }
  CHECK(found > 0);
}

TEST_CASE("compression rule") {
  auto sp = MultiwaveletBasis::build(BasisKind::SpatialDirichlet, 2, 1.0, 6);
  auto tb = MultiwaveletBasis::build(BasisKind::Temporal, 2, 1.0, 6);
  auto t2 = WaveletOperator::build(sp, WaveletOperator::Kind::SpatialStiffness);
  auto tt = WaveletOperator::build(tb, WaveletOperator::Kind::TemporalDerivative);

  SUBCASE("large j reproduces the exact section") {
    const int j = sp->max_level() + 1;
    for (int a = 0; a < t2->size(); a += 11)
      for (int b = 0; b < t2->size(); b += 7) CHECK(t2->entry_compressed(a, b, j) == t2->entry(a, b));
  }
  SUBCASE("zeroth derivative approximation is empty") {
    for (int a = 0; a < tt->size(); a += 13)
      for (int b = 0; b < tt->size(); b += 3) CHECK(tt->entry_compressed(a, b, 0) == 0.0);
  }
  SUBCASE("measured rescaled error is nonincreasing in j") {
    for (int j = 1; j < t2->bound_count(); ++j) CHECK(t2->bound(j) <= t2->bound(j - 1) + 1e-15);
    CHECK(t2->bound(0) > 0.0);
    CHECK(t2->bound(sp->max_level() + 2) == 0.0);
  }
  SUBCASE("level decay: nothing retained beyond the band") {
    for (int a = 0; a < t2->size(); a += 17)
      for (int b = 0; b < t2->size(); b += 5) {
        const int diff = std::abs(sp->level_of(a) - sp->level_of(b));
        if (diff > 2) CHECK(t2->entry_compressed(a, b, 2) == 0.0);
      }
  }
  SUBCASE("nested derivative bands have bounded per-row counts") {
    const int c = tt->nnz_per_row_bound();
    CHECK(c > 0);
    CHECK(c <= 120);
    // retained entries equal exact entries (nestedness)
    for (int j = 1; j <= 4; ++j)
      for (int a = 0; a < tt->size(); a += 9)
        for (int b = 0; b < tt->size(); b += 4)
          if (tt->retained(a, b, j)) {
            CHECK(tt->retained(a, b, j + 1));
            CHECK(tt->entry_compressed(a, b, j) == tt->entry(a, b));
          }
  }
}

TEST_CASE("riesz stability proxy for the rescaled stiffness") {
  auto sp = MultiwaveletBasis::build(BasisKind::SpatialDirichlet, 2, 1.0, 6);
  auto t2 = WaveletOperator::build(sp, WaveletOperator::Kind::SpatialStiffness);
  const int m = t2->size();
  Matrix c2(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) c2(i, j) = t2->scaling_weight(i) * t2->entry(i, j) * t2->scaling_weight(j);
  EigResult e = sym_eig(c2);
  CHECK(e.lambda.back() > 0.0);
  CHECK(e.lambda.front() / e.lambda.back() <= 20.0);
}

TEST_CASE("index linearization roundtrip") {
  auto basis = MultiwaveletBasis::build(BasisKind::Temporal, 3, 1.0, 5);
  for (int ord = 0; ord < basis->size(); ++ord) {
    const WaveletIndex idx = basis->unflatten(ord);
    CHECK(basis->flat_index(idx) == ord);
    CHECK(idx.translation < basis->positions(idx.level));
    CHECK(idx.generator < basis->multiplicity(idx.level));
  }
  CHECK_THROWS_AS(basis->flat_index({99, 0, 0}), std::invalid_argument);
}

TEST_CASE("unsupported order is a configuration error") {
  CHECK_THROWS_AS(MultiwaveletBasis::build(BasisKind::Temporal, 1, 1.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(MultiwaveletBasis::build(BasisKind::Temporal, 3, -1.0, 3), std::invalid_argument);
}
