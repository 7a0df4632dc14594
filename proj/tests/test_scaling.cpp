#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stlr/expsum.hpp"
#include "stlr/scaling_tables.hpp"
#include "stlr/special_functions.hpp"

using namespace stlr;

namespace {

// 200-term Maclaurin series in extended precision, independent of the
// production path for |x| > 4
long double dawson_series_oracle(long double x) {
  long double term = x, sum = x;
  for (int n = 0; n < 200; ++n) {
    term *= -2.0L * x * x / (2.0L * n + 3.0L);
    sum += term;
  }
  return sum;
}

}  // namespace

TEST_CASE("dawson function") {
  CHECK(dawson(0.0) == 0.0);
  CHECK(dawson(1.0) == doctest::Approx((double)dawson_series_oracle(1.0L)).epsilon(1e-14));
  CHECK(dawson(-1.0) == -dawson(1.0));
  // reference values across the series/quadrature splice
  CHECK(std::abs(dawson(0.5) - 4.2443638350202229e-01) <= 1e-12);
  CHECK(std::abs(dawson(3.9) - 1.3292729108108925e-01) <= 1e-12);
  CHECK(std::abs(dawson(4.0) - 1.2934800123600509e-01) <= 1e-12);
  CHECK(std::abs(dawson(4.1) - 1.2596465843434618e-01) <= 1e-12);
  CHECK(std::abs(dawson(6.0) - 8.4542688974543881e-02) <= 1e-12);
  CHECK(std::abs(dawson(10.0) - 5.0253847187598538e-02) <= 1e-12);
  CHECK(std::abs(dawson(50.0) - 1.0002001201201684e-02) <= 1e-12);
  // derivative identity F' = 1 - 2 x F by central differences
  for (double x : {0.3, 1.7, 3.2, 4.5, 8.0}) {
    const double h = 1e-6;
    const double fd = (dawson(x + h) - dawson(x - h)) / (2.0 * h);
    CHECK(fd == doctest::Approx(1.0 - 2.0 * x * dawson(x)).epsilon(1e-7));
  }
}

TEST_CASE("erf inverse") {
  CHECK(std::erf(0.0) == 0.0);
  CHECK(erfc_inverse(1.0) == 0.0);
  CHECK(std::abs(erfc_inverse(0.05) - 1.3859038243496782) <= 1e-12);
  CHECK(std::abs(erfc_inverse(0.3) - 7.3286907795921707e-01) <= 1e-12);
  for (double x : {-1.5, -0.2, 0.4, 2.0}) CHECK(erfc_inverse(std::erfc(x)) == doctest::Approx(x).epsilon(1e-10));
  CHECK_THROWS_AS(erfc_inverse(0.0), std::domain_error);
  CHECK_THROWS_AS(erfc_inverse(2.0), std::domain_error);
}

TEST_CASE("X-flavor parameters") {
  SUBCASE("step size formula") {
    CHECK(step_size_x(1.0, 0.1) == doctest::Approx(2.0 * M_PI * M_PI / (3.0 * std::log(201.0))).epsilon(1e-15));
  }
  SUBCASE("n_plus against its defining formula and monotonicity in delta") {
    const double h = step_size_x(1.0, 0.1);
    const int expect = (int)std::ceil(2.0 / h * std::log(erfc_inverse(0.05)));
    CHECK(nplus_x(1.0, 0.1, h) == expect);
    int prev = 0;
    for (double delta : {0.5, 0.2, 0.1, 0.02, 0.004}) {
      const int np = nplus_x(10.0, delta, step_size_x(10.0, delta));
      CHECK(np >= prev);
      prev = np;
    }
  }
  SUBCASE("f decays to zero") {
    CHECK(f_x(1.0, 1.0, 40.0) <= 1e-8);
    CHECK(f_x(1.0, 1.0, 80.0) <= 1e-16);
    CHECK(f_x(100.0, 1.0, 80.0) <= 1e-15);
  }
  SUBCASE("m_x below the closed-form bound and monotone in eta") {
    for (double a : {1.0, 100.0, 1e6}) {
      int prev = 0;
      for (double eta : {0.5, 0.1, 0.01, 1e-4, 1e-8}) {
        for (double k : {10.0, 1e4, 1e8}) {
          const int n = m_x(a, eta, k, 0.1);
          CHECK(n <= m_x_closed_bound(a, eta, k, 0.1));
          if (k == 1e8) {
            CHECK(n >= prev);  // m_x grows as eta shrinks
            prev = n;
          }
        }
      }
    }
  }
}

TEST_CASE("X-flavor certification sweeps") {
  const double delta = 0.1, K = 1e8;
  for (double a : {1.0, 100.0, 1e6}) {
    const int n = m_x(a, delta / 2.0, K, delta);
    SweepResult sweep = certify_x(a, delta, K, n, 2000);
    CHECK(sweep.max_rel_err <= delta);

    // positivity of the sum on the sweep once n passes the threshold
    ExpSumScaling es = build_expsum_x(a, delta, std::max(n, positivity_threshold_x(a, delta)));
    for (int i = 0; i < 50; ++i) {
      const double s = std::exp(std::log(K) * i / 49.0);
      CHECK(es.eval(s) > 0.0);
    }

    // doubling n beyond m_x changes the sum by at most eta * target
    const double eta = 1e-3;
    const int n1 = std::max(m_x(a, eta, K, delta), positivity_threshold_x(a, delta));
    ExpSumScaling e1 = build_expsum_x(a, delta, n1);
    ExpSumScaling e2 = build_expsum_x(a, delta, 2 * n1);
    for (int i = 0; i < 50; ++i) {
      const double s = std::exp(std::log(K) * i / 49.0);
      const double target = std::sqrt(s) / (s + std::sqrt(a));
      CHECK(std::abs(e1.eval(s) - e2.eval(s)) <= eta * target * (1 + 1e-9));
    }
  }
}

TEST_CASE("Y-flavor") {
  const double delta = 0.1;
  SUBCASE("n_plus formula at the upper-bound step size") {
    const double h = step_size_y(delta);
    CHECK(h == doctest::Approx(M_PI * M_PI / (5.0 * (std::abs(std::log(0.05)) + 4.0))).epsilon(1e-15));
    const double m = std::max(4.0 / std::sqrt(M_PI), std::sqrt(std::abs(std::log(0.05))));
    CHECK(nplus_y(delta, h) == (int)std::ceil(m / h));
  }
  SUBCASE("M_Y at eta = delta/2 is the base count") {
    const double h = step_size_y(delta);
    CHECK(m_y(delta / 2.0, 1e8, delta, h) == m_y(0.05, 1e8, delta, h));
  }
  SUBCASE("certification sweep") {
    for (double K : {100.0, 1e8}) {
      const int n = m_y(delta / 2.0, K, delta, step_size_y(delta));
      SweepResult sweep = certify_y(delta, K, n, 2000);
      CHECK(sweep.max_rel_err <= delta);
    }
  }
}

TEST_CASE("scaling tables") {
  auto tb = MultiwaveletBasis::build(BasisKind::Temporal, 2, 1.0, 4);
  auto sp = MultiwaveletBasis::build(BasisKind::SpatialDirichlet, 2, 1.0, 4);
  const int d = 2;
  ScalingTables tables(tb, sp, d, 0.1);

  SUBCASE("arguments are at least one and a >= s_min^4") {
    for (int i = 0; i < sp->size(); ++i)
      for (int j = 0; j < sp->size(); ++j) {
        const int ords[2] = {i, j};
        CHECK(tables.s_arg(ords) >= 1.0 - 1e-12);
      }
    for (int t = 0; t < tb->size(); ++t) CHECK(tables.a_t(t) >= std::pow(tables.s_min(), 4.0) * (1 - 1e-12));
  }
  SUBCASE("sy decreases as the max level grows") {
    double prev = 1e300;
    for (int lvl = 1; lvl <= 4; ++lvl) {
      const int o = sp->flat_index({lvl, 0, 0});
      const int ords[2] = {o, o};
      const double v = tables.sy_exact(ords);
      CHECK(v < prev);
      prev = v;
    }
  }
  SUBCASE("exp-sum ratio stays within [1-delta, 1+delta]") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(0, sp->size() - 1);
    std::uniform_int_distribution<int> pickt(0, tb->size() - 1);
    for (int rep = 0; rep < 40; ++rep) {
      const int ords[2] = {pick(rng), pick(rng)};
      const int t = pickt(rng);
      // limit surrogate vs the ideal sqrt(s)/(s+sqrt(a)) target form
      const double sx = tables.sx_limit(t, ords);
      const double sx_bar = tables.sx_exact(t, ords);
      CHECK(sx / sx_bar >= 1.0 - 0.1 - 1e-9);
      CHECK(sx / sx_bar <= 1.0 + 0.1 + 1e-9);
      const double sy = tables.sy_limit(ords);
      const double sy_bar = tables.sy_exact(ords);
      CHECK(sy / sy_bar >= 1.0 - 0.1 - 1e-9);
      CHECK(sy / sy_bar <= 1.0 + 0.1 + 1e-9);
    }
  }
  SUBCASE("apply is the diagonal action (dense oracle)") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    auto tree = DimensionTree::linear(2);
    std::vector<std::vector<int>> ids = {{0, 1, 3}, {1, 2, 5}};
    std::vector<double> data(9);
    for (double& v : data) v = gauss(rng);
    SpaceTimeVector v(tree);
    v.set_slice(2, HTensor::from_dense(tree, ids, data));
    const int t_ord = 2;
    const int n = std::max(tables.positivity_t(t_ord), m_x(tables.a_t(t_ord), 0.01, tables.s_arg_max(), 0.1));
    SpaceTimeVector w = tables.apply_dx(v, {{2, n}}, 0.0);
    auto wd = w.slice(2)->to_dense();
    ExpSumScaling es = build_expsum_x(tables.a_t(t_ord), 0.1, n);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int ords[2] = {ids[0][i], ids[1][j]};
        const double diag = tables.s_min() * es.eval(tables.s_arg(ords));
        CHECK(wd[i * 3 + j] == doctest::Approx(diag * data[i * 3 + j]).epsilon(1e-10));
      }
    // and the exact-ratio sanity check after elementwise division
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int ords[2] = {ids[0][i], ids[1][j]};
        const double ratio = (wd[i * 3 + j] / data[i * 3 + j]) / tables.sx_exact(t_ord, ords);
        CHECK(ratio >= 1.0 - 0.1 - 1e-9);
        CHECK(ratio <= 1.0 + 0.1 + 1e-9);
      }
  }
  SUBCASE("zero vector stays zero and positivity is enforced") {
    SpaceTimeVector z(DimensionTree::linear(2));
    CHECK(tables.apply_dx(z, {}, 0.0).empty());
    std::vector<double> one = {1.0};
    HTensor h = HTensor::from_dense(DimensionTree::linear(2), {{0}, {0}}, one);
    CHECK_THROWS_AS(tables.apply_dx_slice(h, 0, 0, 0.0), std::invalid_argument);
  }
  SUBCASE("rank bookkeeping: term count times input rank") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    auto tree = DimensionTree::linear(2);
    std::vector<double> data(16);
    for (double& v : data) v = gauss(rng);
    HTensor h = HTensor::from_dense(tree, {{0, 1, 2, 3}, {0, 1, 2, 3}}, data);
    const int n = tables.positivity_t(0);
    HTensor w = tables.apply_dx_slice(h, 0, n, 0.0);
    ExpSumScaling es = build_expsum_x(tables.a_t(0), 0.1, n);
    CHECK(w.max_rank() <= es.term_count() * h.max_rank());
  }
}
