#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stlr/htensor.hpp"

using namespace stlr;

namespace {

std::vector<double> random_dense(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::vector<double> v(n);
  for (double& x : v) x = gauss(rng);
  return v;
}

std::vector<std::vector<int>> trivial_ids(const std::vector<int>& sizes) {
  std::vector<std::vector<int>> ids;
  for (int s : sizes) {
    std::vector<int> v(s);
    for (int i = 0; i < s; ++i) v[i] = i;
    ids.push_back(v);
  }
  return ids;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dense_norm(const std::vector<double>& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

// naive matricization singular values for the oracle side
std::vector<double> dense_matricization_sigma(const std::vector<double>& v, const std::vector<int>& sizes,
                                              const std::vector<int>& row_modes) {
  const int d = static_cast<int>(sizes.size());
  std::vector<bool> in_row(d, false);
  for (int m : row_modes) in_row[m] = true;
  std::size_t nr = 1, nc = 1;
  for (int m = 0; m < d; ++m) (in_row[m] ? nr : nc) *= sizes[m];
  Matrix mat(nr, nc);
  std::vector<int> idx(d, 0);
  for (std::size_t flat = 0; flat < v.size(); ++flat) {
    std::size_t rem = flat;
    for (int m = d - 1; m >= 0; --m) {
      idx[m] = static_cast<int>(rem % sizes[m]);
      rem /= sizes[m];
    }
    std::size_t r = 0, c = 0;
    for (int m : row_modes) r = r * sizes[m] + idx[m];
    for (int m = 0; m < d; ++m)
      if (!in_row[m]) c = c * sizes[m] + idx[m];
    mat(r, c) = v[flat];
  }
  return jacobi_svd(mat, 0.0).sigma;
}

}  // namespace

TEST_CASE("dimension tree shapes") {
  for (int d : {2, 3, 4, 6}) {
    auto tree = DimensionTree::linear(d);
    CHECK(tree->edge_count() == (d == 2 ? 1 : 2 * d - 3));
    // every non-root node has two disjoint children covering the parent
    for (int n = 0; n < tree->node_count(); ++n) {
      if (tree->is_leaf(n)) continue;
      const auto& nd = tree->node(n);
      CHECK(tree->node(nd.child0).modes.size() + tree->node(nd.child1).modes.size() == nd.modes.size());
    }
  }
  CHECK(DimensionTree::kappa_p(2) == 1.0);
  CHECK(DimensionTree::kappa_p(3) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("dense roundtrip") {
  std::mt19937_64 rng(42);
  auto tree = DimensionTree::linear(3);

  SUBCASE("zero array gives all ranks zero") {
    std::vector<double> z(27, 0.0);
    HTensor t = HTensor::from_dense(tree, trivial_ids({3, 3, 3}), z);
    for (int r : t.representation_ranks()) CHECK(r == 0);
    CHECK(dense_norm(t.to_dense()) == 0.0);
  }
  SUBCASE("elementary tensor has all ranks one") {
    std::vector<double> a = {1.0, -2.0, 0.5}, b = {2.0, 1.0, 1.0}, c = {0.3, 0.7, -1.1};
    std::vector<double> v(27);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) v[(i * 3 + j) * 3 + k] = a[i] * b[j] * c[k];
    HTensor t = HTensor::from_dense(tree, trivial_ids({3, 3, 3}), v);
    for (int r : t.representation_ranks()) CHECK(r == 1);
    CHECK(max_abs_diff(t.to_dense(), v) <= 1e-12);
  }
  SUBCASE("random 4x4x4 roundtrip") {
    auto v = random_dense(64, rng);
    HTensor t = HTensor::from_dense(tree, trivial_ids({4, 4, 4}), v);
    CHECK(max_abs_diff(t.to_dense(), v) <= 1e-12);
  }
  SUBCASE("size cap enforced") {
    std::vector<double> v(64, 1.0);
    CHECK_THROWS_AS(HTensor::from_dense(tree, trivial_ids({4, 4, 4}), v, 10), std::invalid_argument);
  }
}

TEST_CASE("orthogonalize") {
  std::mt19937_64 rng(7);
  auto tree = DimensionTree::linear(3);
  auto v = random_dense(64, rng);
  HTensor t = HTensor::from_dense(tree, trivial_ids({4, 4, 4}), v);
  // make a redundant representation by adding the tensor to a scaled copy
  HTensor s = t;
  s.scale(0.5);
  HTensor r = HTensor::add(t, s);
  std::vector<double> expect(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) expect[i] = 1.5 * v[i];
  CHECK(max_abs_diff(r.to_dense(), expect) <= 1e-12);
  r.orthogonalize();
  CHECK(r.orthonormal());
  CHECK(max_abs_diff(r.to_dense(), expect) <= 1e-11);
  CHECK(r.norm() == doctest::Approx(dense_norm(expect)).epsilon(1e-12));
}

TEST_CASE("hsvd spectra match dense matricization SVDs") {
  std::mt19937_64 rng(3);
  auto tree = DimensionTree::linear(3);
  auto v = random_dense(64, rng);
  HTensor t = HTensor::from_dense(tree, trivial_ids({4, 4, 4}), v);
  t.hsvd();
  for (int e = 0; e < tree->edge_count(); ++e) {
    const int node = tree->edge_nodes()[e];
    auto oracle = dense_matricization_sigma(v, {4, 4, 4}, tree->node(node).modes);
    const auto& got = t.edge_sigma(e);
    REQUIRE(got.size() <= oracle.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == doctest::Approx(oracle[k]).epsilon(1e-10));
    // Frobenius identity per edge
    double sum = 0.0;
    for (double s : got) sum += s * s;
    CHECK(std::sqrt(sum) == doctest::Approx(dense_norm(v)).epsilon(1e-12));
  }
}

TEST_CASE("hsvd of a rank-1 tensor") {
  auto tree = DimensionTree::linear(4);
  std::vector<std::vector<int>> ids = trivial_ids({2, 3, 2, 3});
  std::vector<double> f[4] = {{1, 2}, {1, 0, -1}, {0.5, 0.5}, {2, 1, 1}};
  std::vector<double> v(36);
  for (int i0 = 0; i0 < 2; ++i0)
    for (int i1 = 0; i1 < 3; ++i1)
      for (int i2 = 0; i2 < 2; ++i2)
        for (int i3 = 0; i3 < 3; ++i3)
          v[((i0 * 3 + i1) * 2 + i2) * 3 + i3] = f[0][i0] * f[1][i1] * f[2][i2] * f[3][i3];
  HTensor t = HTensor::from_dense(tree, ids, v);
  t.hsvd();
  for (int e = 0; e < tree->edge_count(); ++e) {
    REQUIRE(t.edge_sigma(e).size() == 1);
    CHECK(t.edge_sigma(e)[0] == doctest::Approx(dense_norm(v)).epsilon(1e-12));
  }
}

TEST_CASE("truncate") {
  std::mt19937_64 rng(11);
  auto tree = DimensionTree::linear(3);
  auto v = random_dense(5 * 5 * 5, rng);
  HTensor t = HTensor::from_dense(tree, trivial_ids({5, 5, 5}), v);
  t.hsvd();

  SUBCASE("full ranks keep the tensor") {
    HTensor u = t;
    u.truncate({5, 5, 5});
    CHECK(max_abs_diff(u.to_dense(), v) <= 1e-12);
  }
  SUBCASE("zero ranks give the zero tensor with full error") {
    HTensor u = t;
    u.truncate({0, 0, 0});
    CHECK(u.norm() == 0.0);
  }
  SUBCASE("truncation error obeys the tail bound") {
    for (std::vector<int> r : {std::vector<int>{1, 1, 1}, {2, 3, 1}, {3, 2, 2}}) {
      HTensor u = t;
      u.truncate(r);
      double tail = 0.0;
      for (int e = 0; e < 3; ++e)
        for (std::size_t k = r[e]; k < t.edge_sigma(e).size(); ++k)
          tail += t.edge_sigma(e)[k] * t.edge_sigma(e)[k];
      const auto ud = u.to_dense();
      double err2 = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) err2 += (ud[i] - v[i]) * (ud[i] - v[i]);
      const double err = std::sqrt(err2);
      CHECK(err <= std::sqrt(tail) + 1e-12);
      for (int e = 0; e < 3; ++e) CHECK(u.representation_ranks()[e] <= r[e]);
    }
  }
  SUBCASE("infeasible rank vector is rejected") {
    auto tree4 = DimensionTree::linear(4);
    auto w = random_dense(16, rng);
    HTensor u = HTensor::from_dense(tree4, trivial_ids({2, 2, 2, 2}), w);
    // interior edge rank exceeding the product of its children
    std::vector<int> bad(tree4->edge_count(), 1);
    bad[tree4->edge_of_node(tree4->node(tree4->root()).child1)] = 1;  // same edge as child0
    // find the interior node below the root and demand too much there
    for (int n = 0; n < tree4->node_count(); ++n) {
      if (!tree4->is_leaf(n) && n != tree4->root() && tree4->edge_of_node(n) >= 0) {
        bad[tree4->edge_of_node(n)] = 3;
      }
    }
    CHECK_THROWS_AS(u.truncate(bad), std::invalid_argument);
  }
}

TEST_CASE("arithmetic") {
  std::mt19937_64 rng(13);
  auto tree = DimensionTree::linear(3);
  auto va = random_dense(27, rng);
  auto vb = random_dense(27, rng);
  HTensor a = HTensor::from_dense(tree, trivial_ids({3, 3, 3}), va);
  HTensor b = HTensor::from_dense(tree, trivial_ids({3, 3, 3}), vb);

  SUBCASE("dense equality and rank additivity") {
    HTensor s = HTensor::add(a, b);
    std::vector<double> expect(27);
    for (int i = 0; i < 27; ++i) expect[i] = va[i] + vb[i];
    CHECK(max_abs_diff(s.to_dense(), expect) <= 1e-12);
    auto ra = a.representation_ranks(), rb = b.representation_ranks(), rs = s.representation_ranks();
    for (std::size_t e = 0; e < rs.size(); ++e) CHECK(rs[e] == ra[e] + rb[e]);
  }
  SUBCASE("v - v vanishes after orthogonalization") {
    HTensor m = a;
    m.scale(-1.0);
    HTensor s = HTensor::add(a, m);
    CHECK(s.norm() <= 1e-12 * a.norm());
  }
  SUBCASE("inner products match the dense oracle") {
    double dense_ip = 0.0;
    for (int i = 0; i < 27; ++i) dense_ip += va[i] * vb[i];
    CHECK(HTensor::inner(a, b) == doctest::Approx(dense_ip).epsilon(1e-12));
  }
}

TEST_CASE("leaf operator application") {
  std::mt19937_64 rng(17);
  auto tree = DimensionTree::linear(3);
  auto v = random_dense(27, rng);
  HTensor t = HTensor::from_dense(tree, trivial_ids({3, 3, 3}), v);

  SUBCASE("identity leaves the tensor unchanged") {
    HTensor u = t;
    u.apply_leaf_operator(1, {0, 1, 2}, [](int i, int j) { return i == j ? 1.0 : 0.0; });
    CHECK(max_abs_diff(u.to_dense(), v) <= 1e-12);
  }
  SUBCASE("dense oracle for a random matrix on mode 0") {
    Matrix m(3, 3);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = gauss(rng);
    HTensor u = t;
    u.apply_leaf_operator(0, {0, 1, 2}, [&](int i, int j) { return m(i, j); });
    std::vector<double> expect(27, 0.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) expect[(i * 3 + j) * 3 + k] += m(i, l) * v[(l * 3 + j) * 3 + k];
    CHECK(max_abs_diff(u.to_dense(), expect) <= 1e-12);
    CHECK(u.representation_ranks() == t.representation_ranks());
  }
  SUBCASE("all-ones rank-1 diagonal is the identity") {
    HTensor u = t;
    u.apply_rank1_diagonal({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
    CHECK(max_abs_diff(u.to_dense(), v) <= 1e-12);
  }
  SUBCASE("rank-1 diagonal dense oracle") {
    std::vector<std::vector<double>> diag = {{2, 1, 0.5}, {1, -1, 1}, {0.3, 3, 1}};
    HTensor u = t;
    u.apply_rank1_diagonal(diag);
    std::vector<double> expect(27);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) expect[(i * 3 + j) * 3 + k] = diag[0][i] * diag[1][j] * diag[2][k] * v[(i * 3 + j) * 3 + k];
    CHECK(max_abs_diff(u.to_dense(), expect) <= 1e-12);
  }
}

TEST_CASE("contractions") {
  std::mt19937_64 rng(23);
  auto tree = DimensionTree::linear(3);
  auto v = random_dense(3 * 4 * 5, rng);
  HTensor t = HTensor::from_dense(tree, trivial_ids({3, 4, 5}), v);
  t.hsvd();
  const std::vector<int> sizes = {3, 4, 5};

  SUBCASE("norm identity and dense oracle") {
    for (int mode = 0; mode < 3; ++mode) {
      auto pi = t.contraction(mode);
      CHECK(dense_norm(pi) == doctest::Approx(dense_norm(v)).epsilon(1e-12));
      // dense marginal mass
      for (int i = 0; i < sizes[mode]; ++i) {
        double s = 0.0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 5; ++c) {
              const int idx[3] = {a, b, c};
              if (idx[mode] != i) continue;
              const double x = v[(a * 4 + b) * 5 + c];
              s += x * x;
            }
        CHECK(pi[i] == doctest::Approx(std::sqrt(s)).epsilon(1e-10));
      }
    }
  }
  SUBCASE("elementary tensor separability") {
    std::vector<double> f[3] = {{1, -1, 2}, {0.5, 1, 0, -2}, {1, 1, 1, 1, 3}};
    std::vector<double> w(60);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 5; ++c) w[(a * 4 + b) * 5 + c] = f[0][a] * f[1][b] * f[2][c];
    HTensor u = HTensor::from_dense(tree, trivial_ids({3, 4, 5}), w);
    u.hsvd();
    auto pi = u.contraction(0);
    const double n1 = dense_norm(f[1]), n2 = dense_norm(f[2]);
    for (int a = 0; a < 3; ++a) CHECK(pi[a] == doctest::Approx(std::abs(f[0][a]) * n1 * n2).epsilon(1e-12));
  }
  SUBCASE("restriction error bound via contractions") {
    std::vector<std::vector<int>> keep = {{0, 2}, {1, 2, 3}, {0, 1, 4}};
    HTensor u = t;
    u.restrict_modes(keep);
    auto ud = u.to_dense();
    // dense restriction residual
    double err2 = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 5; ++c) {
          const bool ina = (a == 0 || a == 2), inb = (b >= 1), inc = (c == 0 || c == 1 || c == 4);
          const double x = v[(a * 4 + b) * 5 + c];
          if (!(ina && inb && inc)) err2 += x * x;
        }
    double bound2 = 0.0;
    for (int mode = 0; mode < 3; ++mode) {
      auto pi = t.contraction(mode);
      for (int i = 0; i < sizes[mode]; ++i) {
        const bool kept = std::find(keep[mode].begin(), keep[mode].end(), i) != keep[mode].end();
        if (!kept) bound2 += pi[i] * pi[i];
      }
    }
    CHECK(std::sqrt(err2) <= std::sqrt(bound2) + 1e-12);
    (void)ud;
  }
  SUBCASE("subadditivity on random pairs") {
    auto w = random_dense(60, rng);
    HTensor b = HTensor::from_dense(tree, trivial_ids({3, 4, 5}), w);
    HTensor s = HTensor::add(t, b);
    s.hsvd();
    HTensor bh = b;
    bh.hsvd();
    for (int mode = 0; mode < 3; ++mode) {
      auto ps = s.contraction(mode);
      auto pt = t.contraction(mode);
      auto pb = bh.contraction(mode);
      for (std::size_t i = 0; i < ps.size(); ++i) CHECK(ps[i] <= pt[i] + pb[i] + 1e-12);
    }
  }
}

TEST_CASE("truncation quasi-optimality at oracle scale") {
  // tail mass <= kappa_P^2 * best approximation error^2, with the best error
  // estimated by alternating projections (upper bound refined by restarts)
  std::mt19937_64 rng(31);
  auto tree = DimensionTree::linear(3);
  const double kp = DimensionTree::kappa_p(3);
  for (int rep = 0; rep < 5; ++rep) {
    auto v = random_dense(4 * 4 * 4, rng);
    HTensor t = HTensor::from_dense(tree, trivial_ids({4, 4, 4}), v);
    t.hsvd();
    double tail2 = 0.0;
    for (int e = 0; e < 3; ++e)
      for (std::size_t k = 1; k < t.edge_sigma(e).size(); ++k) tail2 += t.edge_sigma(e)[k] * t.edge_sigma(e)[k];

    // ALS for the best rank-(1,1,1) approximation
    std::vector<std::vector<double>> f = {random_dense(4, rng), random_dense(4, rng), random_dense(4, rng)};
    for (int it = 0; it < 200; ++it) {
      for (int mode = 0; mode < 3; ++mode) {
        std::vector<double> g(4, 0.0);
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) {
              const int idx[3] = {a, b, c};
              double w = 1.0;
              for (int m = 0; m < 3; ++m)
                if (m != mode) w *= f[m][idx[m]];
              g[idx[mode]] += v[(a * 4 + b) * 4 + c] * w;
            }
        double othernorm = 1.0;
        for (int m = 0; m < 3; ++m)
          if (m != mode) othernorm *= dense_norm(f[m]) * dense_norm(f[m]);
        for (int i = 0; i < 4; ++i) f[mode][i] = g[i] / othernorm;
      }
    }
    double best2 = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c) {
          const double approx = f[0][a] * f[1][b] * f[2][c];
          const double x = v[(a * 4 + b) * 4 + c];
          best2 += (x - approx) * (x - approx);
        }
    CHECK(tail2 <= kp * kp * best2 * (1.0 + 1e-10));

    HTensor u = t;
    u.truncate({1, 1, 1});
    auto ud = u.to_dense();
    double err2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) err2 += (ud[i] - v[i]) * (ud[i] - v[i]);
    CHECK(std::sqrt(err2) <= kp * std::sqrt(best2) * (1.0 + 1e-10));
  }
}
