// Temporary construction probe; replaced by the real CLI later.
#include <cmath>
#include <cstdio>
#include <vector>

#include "stlr/dense_linalg.hpp"
#include "stlr/wavelet_basis.hpp"

using namespace stlr;

int main() {
  for (int order : {2, 3}) {
    auto sp = MultiwaveletBasis::build(BasisKind::SpatialDirichlet, order, 1.0, 8);
    const int m = sp->size();
    Matrix c2(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        const double v = inner_product(sp->derivative(i), sp->derivative(j)) /
                         std::sqrt(sp->h1_seminorm_sq(i) * sp->h1_seminorm_sq(j));
        c2(i, j) = v;
        c2(j, i) = v;
      }
    EigResult e = sym_eig(c2);
    std::printf("order=%d m=%d riesz eig range [%.4f, %.4f] ratio %.2f\n", order, m, e.lambda.back(),
                e.lambda.front(), e.lambda.front() / e.lambda.back());

    auto tb = MultiwaveletBasis::build(BasisKind::Temporal, order, 1.0, 6);
    double worst = 0.0;
    for (int i = 0; i < tb->size(); ++i)
      for (int j = 0; j < tb->size(); ++j) {
        const double lhs = inner_product(tb->derivative(i), tb->function(j)) +
                           inner_product(tb->derivative(j), tb->function(i));
        const double rhs = tb->value_at_end(i) * tb->value_at_end(j) - tb->value_at_0(i) * tb->value_at_0(j);
        worst = std::max(worst, std::abs(lhs - rhs));
      }
    std::printf("order=%d IBP worst=%.3e\n", order, worst);

    // super-compressibility: nnz per row of scaled T_t band entries above 1e-10
    int cmax = 0;
    for (int i = 0; i < tb->size(); ++i) {
      const int li = tb->level_of(i);
      for (int band = 0; band <= 6; ++band) {
        int cnt = 0;
        for (int j = 0; j < tb->size(); ++j) {
          if (std::abs(tb->level_of(j) - li) != band) continue;
          const double e2 = inner_product(tb->derivative(i), tb->function(j)) /
                            std::sqrt(tb->h1_norm_sq(j));
          if (std::abs(e2) > 1e-10) ++cnt;
        }
        cmax = std::max(cmax, cnt);
      }
    }
    std::printf("order=%d super-compressibility c (max nnz/row per band) = %d\n", order, cmax);
  }
  return 0;
}
