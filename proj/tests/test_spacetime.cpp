#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stlr/spacetime_vector.hpp"

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

SpaceTimeVector random_vector(std::shared_ptr<const DimensionTree> tree, const std::vector<int>& slices,
                              const std::vector<int>& sizes, std::mt19937_64& rng) {
  SpaceTimeVector v(tree);
  std::size_t n = 1;
  for (int s : sizes) n *= s;
  for (int t : slices) v.set_slice(t, HTensor::from_dense(tree, trivial_ids(sizes), random_dense(n, rng)));
  return v;
}

// dense image of a 3-slice vector for oracle checks: map slice -> dense array
std::map<int, std::vector<double>> to_dense_map(const SpaceTimeVector& v, std::size_t cap = 200000) {
  std::map<int, std::vector<double>> out;
  for (const auto& [t, h] : v.slices()) out[t] = h.to_dense(cap);
  return out;
}

double dense_distance(const SpaceTimeVector& a, const SpaceTimeVector& b, const std::vector<int>& slices,
                      const std::vector<int>& sizes) {
  std::size_t n = 1;
  for (int s : sizes) n *= s;
  double err2 = 0.0;
  for (int t : slices) {
    std::vector<double> da(n, 0.0), db(n, 0.0);
    // align index sets by padding into the full grid
    auto pad = [&](const HTensor* h, std::vector<double>& out) {
      if (!h) return;
      auto d = h->to_dense();
      // positions of active ids inside the full grid
      std::vector<std::size_t> strides(sizes.size(), 1);
      for (int m = static_cast<int>(sizes.size()) - 2; m >= 0; --m) strides[m] = strides[m + 1] * sizes[m + 1];
      std::vector<std::size_t> local(h->dims(), 0);
      const std::size_t total = d.size();
      for (std::size_t f = 0; f < total; ++f) {
        std::size_t rem = f, full = 0;
        for (int m = h->dims() - 1; m >= 0; --m) {
          local[m] = rem % h->leaf_ids(m).size();
          rem /= h->leaf_ids(m).size();
        }
        for (int m = 0; m < h->dims(); ++m) full += strides[m] * h->leaf_ids(m)[local[m]];
        out[full] += d[f];
      }
    };
    pad(a.slice(t), da);
    pad(b.slice(t), db);
    for (std::size_t i = 0; i < n; ++i) err2 += (da[i] - db[i]) * (da[i] - db[i]);
  }
  return std::sqrt(err2);
}

}  // namespace

TEST_CASE("contraction table") {
  std::mt19937_64 rng(5);
  auto tree = DimensionTree::linear(3);
  SpaceTimeVector v = random_vector(tree, {0, 3}, {3, 3, 3}, rng);

  SUBCASE("norm identity per mode") {
    SpaceTimeVector w = v;
    auto table = contractions(w);
    for (int m = 0; m < 3; ++m) CHECK(table.mode_norm(m) == doctest::Approx(v.norm()).epsilon(1e-12));
  }
  SUBCASE("single slice table matches the slice contraction") {
    SpaceTimeVector w(tree);
    w.set_slice(2, *v.slice(0));
    auto table = contractions(w);
    HTensor h = *v.slice(0);
    h.hsvd();
    auto pi = h.contraction(1);
    const auto& got = table.values.at({1, 2});
    REQUIRE(got.size() == pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) CHECK(got[i] == doctest::Approx(pi[i]).epsilon(1e-12));
  }
  SUBCASE("dense summation oracle on two slices") {
    SpaceTimeVector w = v;
    auto table = contractions(w);
    auto dm = to_dense_map(v);
    for (const auto& [t, d] : dm) {
      for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int b = 0; b < 3; ++b)
          for (int c = 0; c < 3; ++c) s += d[(i * 3 + b) * 3 + c] * d[(i * 3 + b) * 3 + c];
        CHECK(table.values.at({0, t})[i] == doctest::Approx(std::sqrt(s)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("recompress") {
  std::mt19937_64 rng(9);
  auto tree = DimensionTree::linear(3);
  SpaceTimeVector v = random_vector(tree, {0, 1, 5}, {3, 3, 3}, rng);

  SUBCASE("eta = 0 keeps everything") {
    RecompressReport rep;
    SpaceTimeVector w = recompress(v, 0.0, &rep);
    CHECK(dense_distance(v, w, {0, 1, 5}, {3, 3, 3}) <= 1e-12);
    CHECK(w.rank_infty() == v.rank_infty());
  }
  SUBCASE("huge eta may drop everything but stays within budget") {
    const double eta = 10.0 * std::sqrt(3.0 * 3.0) * v.norm();
    SpaceTimeVector w = recompress(v, eta);
    CHECK(dense_distance(v, w, {0, 1, 5}, {3, 3, 3}) <= eta);
  }
  SUBCASE("error bound and minimal common cap") {
    for (double eta : {0.3, 0.8, 1.6}) {
      RecompressReport rep;
      SpaceTimeVector w = recompress(v, eta, &rep);
      CHECK(dense_distance(v, w, {0, 1, 5}, {3, 3, 3}) <= eta * (1 + 1e-12));
      // exhaustive scan over the common cap R
      SpaceTimeVector work = v;
      int rstar = -1;
      for (int cap = 0; cap <= v.rank_infty(); ++cap) {
        double tail2 = 0.0;
        for (auto& [t, h] : work.slices()) {
          HTensor hh = h;
          hh.hsvd();
          for (int e = 0; e < tree->edge_count(); ++e) {
            const auto& sig = hh.edge_sigma(e);
            for (std::size_t k = cap; k < sig.size(); ++k) tail2 += sig[k] * sig[k];
          }
        }
        if (tail2 <= eta * eta) {
          rstar = cap;
          break;
        }
      }
      REQUIRE(rstar >= 0);
      CHECK(rep.rank_infty == rstar);
      CHECK(w.rank_infty() <= rstar);
    }
  }
}

TEST_CASE("coarsen") {
  std::mt19937_64 rng(21);
  auto tree = DimensionTree::linear(3);
  const double kc = DimensionTree::kappa_c(3);

  SUBCASE("eta above sqrt(d) norm empties the vector") {
    SpaceTimeVector v = random_vector(tree, {0, 2}, {3, 3, 3}, rng);
    SpaceTimeVector w = coarsen(v, std::sqrt(3.0) * v.norm() * (1 + 1e-12));
    CHECK(w.empty());
  }
  SUBCASE("a single Kronecker entry is kept once N covers its d contractions") {
    SpaceTimeVector v(tree);
    std::vector<double> unit = {0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};  // one entry of a 2x2x2 block
    v.set_slice(4, HTensor::from_dense(tree, trivial_ids({2, 2, 2}), unit));
    CoarsenReport rep;
    SpaceTimeVector w = coarsen(v, 0.5, &rep);
    CHECK(rep.retained == 3);
    CHECK(dense_distance(v, w, {4}, {2, 2, 2}) <= 1e-12);
  }
  SUBCASE("mu_N properties") {
    SpaceTimeVector v = random_vector(tree, {0, 1, 2}, {2, 2, 2}, rng);
    auto mu = coarsening_error_sequence(v);
    for (std::size_t n = 1; n < mu.size(); ++n) CHECK(mu[n] <= mu[n - 1] + 1e-12);
    CHECK(mu.back() <= 1e-12);
    CHECK(mu.front() == doctest::Approx(std::sqrt(3.0) * v.norm()).epsilon(1e-10));
  }
  SUBCASE("hybrid competitor enumeration bound") {
    // all structured index sets with per-slice per-mode subsets of {0,1} and
    // total budget N; mu_N must be within sqrt(d) of the best of them
    for (int rep = 0; rep < 4; ++rep) {
      SpaceTimeVector v = random_vector(tree, {0, 1, 2}, {2, 2, 2}, rng);
      auto dm = to_dense_map(v);
      auto mu = coarsening_error_sequence(v);
      const std::vector<int> slices = {0, 1, 2};
      // enumerate subsets per (slice, mode): 4^9 combinations
      const int combos = 1 << 18;  // 2 bits per (slice, mode)
      std::vector<double> best(mu.size(), 1e300);
      for (int mask = 0; mask < combos; ++mask) {
        int budget = 0;
        double resid2 = 0.0;
        int shift = 0;
        bool keep_bits[3][3][2];
        for (int s = 0; s < 3; ++s)
          for (int m = 0; m < 3; ++m) {
            const int bits = (mask >> shift) & 3;
            shift += 2;
            keep_bits[s][m][0] = bits & 1;
            keep_bits[s][m][1] = bits & 2;
            budget += (bits & 1) + ((bits >> 1) & 1);
          }
        for (int s = 0; s < 3; ++s) {
          const auto& d = dm.at(slices[s]);
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int c = 0; c < 2; ++c) {
                const bool kept = keep_bits[s][0][a] && keep_bits[s][1][b] && keep_bits[s][2][c];
                if (!kept) {
                  const double x = d[(a * 2 + b) * 2 + c];
                  resid2 += x * x;
                }
              }
        }
        if (budget < static_cast<int>(best.size())) best[budget] = std::min(best[budget], resid2);
      }
      // best is attained by *some* budget <= N; make it monotone
      for (std::size_t n = 1; n < best.size(); ++n) best[n] = std::min(best[n], best[n - 1]);
      for (std::size_t n = 0; n < best.size() && n <= 18; ++n) {
        if (best[n] > 1e200) continue;
        CHECK(mu[n] <= kc * std::sqrt(best[n]) + 1e-10);
      }
    }
  }
  SUBCASE("coarsening never raises slice ranks") {
    SpaceTimeVector v = random_vector(tree, {0, 1}, {3, 3, 3}, rng);
    SpaceTimeVector w = coarsen(v, 0.4 * v.norm());
    for (const auto& [t, h] : w.slices()) {
      const HTensor* orig = v.slice(t);
      REQUIRE(orig != nullptr);
      auto rw = h.representation_ranks();
      auto rv = orig->representation_ranks();
      for (std::size_t e = 0; e < rw.size(); ++e) CHECK(rw[e] <= rv[e]);
    }
  }
}

TEST_CASE("axpy and norms") {
  std::mt19937_64 rng(33);
  auto tree = DimensionTree::linear(3);
  SpaceTimeVector v = random_vector(tree, {0, 2}, {3, 3, 3}, rng);
  SpaceTimeVector w = random_vector(tree, {2, 5}, {3, 3, 3}, rng);

  SUBCASE("v - v vanishes") {
    SpaceTimeVector z = SpaceTimeVector::axpy(-1.0, v, v);
    CHECK(z.norm() <= 1e-12 * v.norm());
  }
  SUBCASE("norm additivity over disjoint temporal supports") {
    SpaceTimeVector a = random_vector(tree, {0}, {3, 3, 3}, rng);
    SpaceTimeVector b = random_vector(tree, {7}, {3, 3, 3}, rng);
    SpaceTimeVector s = SpaceTimeVector::axpy(1.0, a, b);
    CHECK(s.norm() * s.norm() == doctest::Approx(a.norm() * a.norm() + b.norm() * b.norm()).epsilon(1e-12));
  }
  SUBCASE("dense oracle") {
    SpaceTimeVector s = SpaceTimeVector::axpy(2.5, v, w);
    auto dv = to_dense_map(v), dw = to_dense_map(w), ds = to_dense_map(s);
    for (int t : {0, 2, 5}) {
      std::vector<double> expect(27, 0.0);
      if (dv.count(t))
        for (int i = 0; i < 27; ++i) expect[i] += 2.5 * dv[t][i];
      if (dw.count(t))
        for (int i = 0; i < 27; ++i) expect[i] += dw[t][i];
      REQUIRE(ds.count(t));
      for (int i = 0; i < 27; ++i) CHECK(ds[t][i] == doctest::Approx(expect[i]).epsilon(1e-10));
    }
  }
  SUBCASE("inner product consistency") {
    const double ip = SpaceTimeVector::inner(v, w);
    auto dv = to_dense_map(v), dw = to_dense_map(w);
    double expect = 0.0;
    for (int i = 0; i < 27; ++i) expect += dv[2][i] * dw[2][i];
    CHECK(ip == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("combined reduction bound") {
  std::mt19937_64 rng(41);
  auto tree = DimensionTree::linear(3);
  const double kp = DimensionTree::kappa_p(3), kc = DimensionTree::kappa_c(3);
  const double alpha = 1.0;
  for (int rep = 0; rep < 5; ++rep) {
    // u with known structure: low-rank plus sparse support
    SpaceTimeVector u = random_vector(tree, {0, 1, 3}, {3, 3, 3}, rng);
    for (auto& [t, h] : u.slices()) h.truncate({2, 2, 2});
    u.prune();
    // v is a perturbation of u
    SpaceTimeVector p = random_vector(tree, {0, 1, 3}, {3, 3, 3}, rng);
    const double eta = 0.05 * u.norm();
    p.scale(eta / (2.0 * p.norm()));
    SpaceTimeVector v = SpaceTimeVector::axpy(1.0, u, p);
    REQUIRE(dense_distance(u, v, {0, 1, 3}, {3, 3, 3}) <= eta);

    SpaceTimeVector w = coarsen(recompress(v, kp * (1 + alpha) * eta), kc * (kp + 1) * (1 + alpha) * eta);
    const double err = dense_distance(u, w, {0, 1, 3}, {3, 3, 3});
    const double bound = (1 + kp * (1 + alpha) + kc * (kp + 1) * (1 + alpha)) * eta;
    CHECK(err <= bound * (1 + 1e-12));
  }
}
