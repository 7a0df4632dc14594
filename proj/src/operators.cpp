#include "stlr/operators.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace stlr {

namespace {

std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// pairwise accumulation with a certified total rounding budget
HTensor accumulate_rounded(std::vector<HTensor> parts, double tol) {
  if (parts.empty()) return HTensor();
  const double per_merge = (parts.size() > 1 && tol > 0.0) ? tol / static_cast<double>(parts.size() - 1) : 0.0;
  while (parts.size() > 1) {
    std::vector<HTensor> next;
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
      HTensor s = HTensor::add(parts[i], parts[i + 1]);
      if (per_merge > 0.0) s = HTensor::rounded(s, per_merge);
      next.push_back(std::move(s));
    }
    if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
    parts = std::move(next);
  }
  return std::move(parts.front());
}

}  // namespace

HTensor apply_one_per_leaf(const HTensor& x, const std::vector<LeafOp>& ops) {
  if (!x.valid() || x.is_structurally_zero()) return x;
  const auto& tree = x.tree();
  const int d = x.dims();
  if (d == 1) {
    HTensor y = x;
    y.apply_leaf_operator(0, ops[0].out_ids, ops[0].entry);
    return y;
  }

  HTensor base = x;  // shares structure; we rebuild the pieces below
  // assemble directly: new leaves with [identity | operator] column blocks
  std::vector<std::vector<int>> new_ids(d);
  std::vector<Matrix> new_u(d);
  for (int m = 0; m < d; ++m) {
    const auto& in_ids = x.leaf_ids(m);
    const Matrix& u = x.leaf_frame(m);
    const std::size_t r = u.cols();
    new_ids[m] = sorted_union(in_ids, ops[m].out_ids);
    Matrix nu(new_ids[m].size(), 2 * r);
    for (std::size_t i = 0; i < in_ids.size(); ++i) {
      const std::size_t row =
          std::lower_bound(new_ids[m].begin(), new_ids[m].end(), in_ids[i]) - new_ids[m].begin();
      for (std::size_t k = 0; k < r; ++k) nu(row, k) = u(i, k);
    }
    for (int oid : ops[m].out_ids) {
      const std::size_t row = std::lower_bound(new_ids[m].begin(), new_ids[m].end(), oid) - new_ids[m].begin();
      for (std::size_t i = 0; i < in_ids.size(); ++i) {
        const double e = ops[m].entry(oid, in_ids[i]);
        if (e == 0.0) continue;
        for (std::size_t k = 0; k < r; ++k) nu(row, r + k) += e * u(i, k);
      }
    }
    new_u[m] = std::move(nu);
  }

  // transfers: block structure over (no factor applied yet | one factor applied)
  (void)base;
  std::vector<Tensor3> new_transfer(tree.node_count());
  for (int n = 0; n < tree.node_count(); ++n) {
    if (tree.is_leaf(n) || n == tree.root()) continue;
    const Tensor3& b = x.transfer(n);
    Tensor3 b2(2 * b.n0, 2 * b.n1, 2 * b.n2);
    for (int kk = 0; kk < b.n0; ++kk)
      for (int ll = 0; ll < b.n1; ++ll)
        for (int mm = 0; mm < b.n2; ++mm) {
          const double v = b.at(kk, ll, mm);
          if (v == 0.0) continue;
          b2.at(kk, ll, mm) = v;                        // (0) <- (0,0)
          b2.at(b.n0 + kk, b.n1 + ll, mm) = v;          // (1) <- (1,0)
          b2.at(b.n0 + kk, ll, b.n2 + mm) = v;          // (1) <- (0,1)
        }
    new_transfer[n] = std::move(b2);
  }
  const Matrix& rb = x.root_matrix();
  Matrix new_root(2 * rb.rows(), 2 * rb.cols());
  for (std::size_t i = 0; i < rb.rows(); ++i)
    for (std::size_t j = 0; j < rb.cols(); ++j) {
      const double v = rb(i, j);
      if (v == 0.0) continue;
      new_root(rb.rows() + i, j) = v;  // factor in the first subtree
      new_root(i, rb.cols() + j) = v;  // factor in the second subtree
    }
  return HTensor::assemble(x.tree_ptr(), std::move(new_ids), std::move(new_u), std::move(new_transfer),
                           std::move(new_root));
}

}  // namespace stlr

namespace stlr {

int ShellPartition::shell_of(int mode, int slice, int id, int j_max) const {
  auto it = position.find({mode, slice, id});
  if (it == position.end()) return j_max + 1;
  const int pos = it->second;
  if (pos == 0) return 0;
  int p = 0;
  while ((1 << p) <= pos) ++p;  // smallest p with pos < 2^p
  return p <= j_max ? p : j_max + 1;
}

std::vector<int> ShellPartition::cumulative_ids(int mode, int slice, int j) const {
  std::vector<int> out;
  auto it = lists.find({mode, slice});
  if (it == lists.end()) return out;
  const long budget = 1L << j;
  for (const auto& [pos, id] : it->second)
    if (pos < budget) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> ShellPartition::shell_masses(const ContractionTable& w, int mode, int j_max) const {
  std::vector<double> mass2(j_max + 2, 0.0);
  for (const auto& [key, vals] : w.values) {
    if (key.first != mode) continue;
    const auto& ids = w.ids.at(key);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const int p = shell_of(mode, key.second, ids[i], j_max);
      mass2[p] += vals[i] * vals[i];
    }
  }
  std::vector<double> mass(mass2.size());
  for (std::size_t p = 0; p < mass2.size(); ++p) mass[p] = std::sqrt(mass2[p]);
  return mass;
}

namespace {

ShellPartition build_partition(const ContractionTable& table) {
  struct Item {
    double value;
    int mode, slice, id;
  };
  std::vector<Item> items;
  for (const auto& [key, vals] : table.values) {
    const auto& ids = table.ids.at(key);
    for (std::size_t i = 0; i < vals.size(); ++i) items.push_back({vals[i], key.first, key.second, ids[i]});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.value != b.value) return a.value > b.value;
    return std::tie(a.mode, a.slice, a.id) < std::tie(b.mode, b.slice, b.id);
  });
  ShellPartition part;
  part.count_ = items.size();
  for (std::size_t pos = 0; pos < items.size(); ++pos) {
    const Item& it = items[pos];
    part.position[{it.mode, it.slice, it.id}] = static_cast<int>(pos);
    part.lists[{it.mode, it.slice}].push_back({static_cast<int>(pos), it.id});
  }
  return part;
}

ContractionTable spatial_table(const HTensor& w) {
  ContractionTable table;
  HTensor h = w;
  h.hsvd();
  for (int m = 0; m < w.dims(); ++m) {
    table.values[{m, -1}] = h.contraction(m);
    table.ids[{m, -1}] = h.leaf_ids(m);
  }
  table.slice_norms[-1] = h.norm();
  return table;
}

}  // namespace

OperatorContext::OperatorContext(std::shared_ptr<const MultiwaveletBasis> temporal,
                                 std::shared_ptr<const MultiwaveletBasis> spatial, int d, double delta)
    : tb_(std::move(temporal)), sp_(std::move(spatial)), d_(d), delta_(delta) {
  t2_ = WaveletOperator::build(sp_, WaveletOperator::Kind::SpatialStiffness);
  tt_ = WaveletOperator::build(tb_, WaveletOperator::Kind::TemporalDerivative);
  tables_ = std::make_shared<ScalingTables>(tb_, sp_, d_, delta_);
  tree_ = DimensionTree::linear(d_);
  c_delta_ = (1.0 + delta_) * (1.0 + delta_);
  calibrate_t0();
  calibrate_norms();
}

void OperatorContext::calibrate_t0() {
  // ||(T0 - T0_j) D_X|| over the section: the squared row sums
  //   sum_{nu_t banded out} theta(0)^2 (S^X(nu_t, s))^2
  // depend on the spatial index only through the argument s and the band only
  // through the maximum spatial level L; maximize over both on a grid.
  const int lt = tb_->size();
  const int lx_max = sp_->max_level();
  // attainable s range for a given max level L
  std::vector<double> semi_min_upto(lx_max + 1, 1e300), semi_max_upto(lx_max + 1, 0.0);
  std::vector<double> semi_min_at(lx_max + 1, 1e300), semi_max_at(lx_max + 1, 0.0);
  for (int o = 0; o < sp_->size(); ++o) {
    const int l = sp_->level_of(o);
    semi_min_at[l] = std::min(semi_min_at[l], sp_->h1_seminorm_sq(o));
    semi_max_at[l] = std::max(semi_max_at[l], sp_->h1_seminorm_sq(o));
  }
  for (int l = 0; l <= lx_max; ++l) {
    semi_min_upto[l] = (l == 0) ? semi_min_at[0] : std::min(semi_min_upto[l - 1], semi_min_at[l]);
    semi_max_upto[l] = (l == 0) ? semi_max_at[0] : std::max(semi_max_upto[l - 1], semi_max_at[l]);
  }
  const double smin2 = tables_->s_min() * tables_->s_min();
  const int jmax = 2 * std::max(lx_max, tb_->max_level()) + 3;
  beta0_.assign(jmax + 1, 0.0);
  double b2 = 0.0;
  for (int lx = 0; lx <= lx_max; ++lx) {
    const double s_lo = smin2 * (semi_min_at[lx] + (d_ - 1) * semi_min_upto[lx]);
    const double s_hi = smin2 * (semi_max_at[lx] + (d_ - 1) * semi_max_upto[lx]);
    for (int g = 0; g < 48; ++g) {
      const double s = s_lo * std::pow(std::max(s_hi / s_lo, 1.0 + 1e-12), g / 47.0);
      std::vector<double> contrib(lt);
      for (int t = 0; t < lt; ++t) {
        const double th0 = tb_->value_at_0(t);
        if (th0 == 0.0) {
          contrib[t] = 0.0;
          continue;
        }
        const double sx = tables_->sx_limit_arg(t, s);
        contrib[t] = th0 * th0 * sx * sx;
      }
      double full = 0.0;
      for (double c : contrib) full += c;
      b2 = std::max(b2, full);
      for (int j = 0; j <= jmax; ++j) {
        double tail = 0.0;
        for (int t = 0; t < lt; ++t) {
          const int band = std::abs(tb_->level_of(t) - 2 * lx);
          const bool retained = (j >= 1) && (band <= j - 1);
          if (!retained) tail += contrib[t];
        }
        beta0_[j] = std::max(beta0_[j], tail);
      }
    }
  }
  for (double& v : beta0_) v = 1.05 * std::sqrt(v);
  norm_b2_ = 1.05 * std::sqrt(b2);
  for (std::size_t j = 1; j < beta0_.size(); ++j) beta0_[j] = std::min(beta0_[j], beta0_[j - 1]);
}

double OperatorContext::bound_t0(int j) const {
  if (j < 0) j = 0;
  if (j >= static_cast<int>(beta0_.size())) return beta0_.empty() ? 0.0 : beta0_.back();
  return beta0_[j];
}

void OperatorContext::calibrate_norms() {
  // power iteration for ||B1|| on a d=2 probe section with the converged
  // scalings; the probe level cap keeps the flat size moderate
  int cap = std::min(sp_->max_level(), 4);
  while (cap > 1 &&
         static_cast<long>(tb_->level_offset(std::min(tb_->max_level(), cap) + 1)) *
                 sp_->level_offset(cap + 1) * sp_->level_offset(cap + 1) >
             60000L)
    --cap;
  const int tcap = std::min(tb_->max_level(), cap);
  const int nt = tb_->level_offset(tcap + 1);
  const int nx = sp_->level_offset(cap + 1);
  const long n = static_cast<long>(nt) * nx * nx;

  std::vector<double> sarg(static_cast<std::size_t>(nx) * nx);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) {
      const int ords[2] = {i, j};
      sarg[static_cast<std::size_t>(i) * nx + j] = tables_->s_arg(ords);
    }
  std::vector<double> dy(sarg.size());
  for (std::size_t i = 0; i < sarg.size(); ++i) dy[i] = tables_->sy_limit_arg(sarg[i]);
  std::vector<std::vector<double>> dx(nt, std::vector<double>(sarg.size()));
  for (int t = 0; t < nt; ++t)
    for (std::size_t i = 0; i < sarg.size(); ++i) dx[t][i] = tables_->sx_limit_arg(t, sarg[i]);

  auto apply_b1_probe = [&](const std::vector<double>& v, std::vector<double>& out) {
    // out = D_Y (I ox Tx + Tt ox I) D_X v on the probe section
    std::vector<double> w(n);
    for (int t = 0; t < nt; ++t)
      for (long i = 0; i < static_cast<long>(sarg.size()); ++i)
        w[t * sarg.size() + i] = dx[t][i] * v[t * sarg.size() + i];
    std::fill(out.begin(), out.end(), 0.0);
    // spatial part
    for (int t = 0; t < nt; ++t)
      for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
          double s = 0.0;
          for (int k = 0; k < nx; ++k) {
            s += t2_->entry(i, k) * w[t * sarg.size() + static_cast<std::size_t>(k) * nx + j];
            s += t2_->entry(j, k) * w[t * sarg.size() + static_cast<std::size_t>(i) * nx + k];
          }
          out[t * sarg.size() + static_cast<std::size_t>(i) * nx + j] += s;
        }
    // temporal part
    for (int t = 0; t < nt; ++t)
      for (int u = 0; u < nt; ++u) {
        const double e = tt_->entry(t, u);
        if (e == 0.0) continue;
        for (std::size_t i = 0; i < sarg.size(); ++i) out[t * sarg.size() + i] += e * w[u * sarg.size() + i];
      }
    for (int t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < sarg.size(); ++i) out[t * sarg.size() + i] *= dy[i];
  };

  std::vector<double> v(n, 1.0), av(n), atav(n);
  double nrm = norm2(v);
  for (double& x : v) x /= nrm;
  double sigma = 0.0;
  for (int it = 0; it < 120; ++it) {
    apply_b1_probe(v, av);
    // A^T: D_X (Tx^T + Tt^T) D_Y: reuse by symmetry of T2 and transposing Tt
    std::vector<double> w(n);
    for (int t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < sarg.size(); ++i) w[t * sarg.size() + i] = dy[i] * av[t * sarg.size() + i];
    std::fill(atav.begin(), atav.end(), 0.0);
    for (int t = 0; t < nt; ++t)
      for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
          double s = 0.0;
          for (int k = 0; k < nx; ++k) {
            s += t2_->entry(k, i) * w[t * sarg.size() + static_cast<std::size_t>(k) * nx + j];
            s += t2_->entry(k, j) * w[t * sarg.size() + static_cast<std::size_t>(i) * nx + k];
          }
          atav[t * sarg.size() + static_cast<std::size_t>(i) * nx + j] += s;
        }
    for (int t = 0; t < nt; ++t)
      for (int u = 0; u < nt; ++u) {
        const double e = tt_->entry(u, t);
        if (e == 0.0) continue;
        for (std::size_t i = 0; i < sarg.size(); ++i)
          atav[t * sarg.size() + i] += e * w[u * sarg.size() + i];
      }
    for (int t = 0; t < nt; ++t)
      for (std::size_t i = 0; i < sarg.size(); ++i) atav[t * sarg.size() + i] *= dx[t][i];
    const double zn = norm2(atav);
    if (zn == 0.0) break;
    sigma = std::sqrt(zn);
    for (long i = 0; i < n; ++i) v[i] = atav[i] / zn;
  }
  norm_b1_ = 1.15 * sigma;
}

ShellPartition OperatorContext::partition(const SpaceTimeVector& v) const {
  SpaceTimeVector work = v;
  return build_partition(contractions(work));
}

ShellPartition OperatorContext::partition_spatial(const HTensor& w) const {
  return build_partition(spatial_table(w));
}

double OperatorContext::error_x(const ShellPartition& pv, const ContractionTable& cw, int j) const {
  double total = 0.0;
  for (int m = 0; m < d_; ++m) {
    auto mass = pv.shell_masses(cw, m, j);
    double s = 0.0;
    for (int p = 0; p <= j; ++p) s += t2_->bound(j - p) * mass[p];
    s += t2_->scaled_norm() * mass[j + 1];
    total += s;
  }
  return c_delta_ * total;
}

double OperatorContext::error_t(const ShellPartition& pv, const ContractionTable& cw, int j) const {
  double total = 0.0;
  for (int m = 0; m < d_; ++m) {
    auto mass = pv.shell_masses(cw, m, j);
    double s = 0.0;
    for (int p = 0; p <= j; ++p) s += tt_->bound(j - p) * mass[p];
    s += tt_->scaled_norm() * mass[j + 1];
    total += s;
  }
  return c_delta_ * total;
}

double OperatorContext::error_t0(const ShellPartition& pv, const ContractionTable& cw, int j) const {
  double total = 0.0;
  for (int m = 0; m < d_; ++m) {
    auto mass = pv.shell_masses(cw, m, j);
    double s = 0.0;
    for (int p = 0; p <= j; ++p) s += bound_t0(j - p) * mass[p];
    s += norm_b2_ * mass[j + 1];
    total += s;
  }
  return total;
}

int OperatorContext::select_j(const ShellPartition& pv, const ContractionTable& cv, double eta, bool with_t0,
                              bool t0_only) const {
  for (int j = 0; j <= 64; ++j) {
    double e;
    if (t0_only)
      e = error_t0(pv, cv, j);
    else
      e = error_total(pv, cv, j) + (with_t0 ? error_t0(pv, cv, j) : 0.0);
    if (e <= eta / 4.0) return j;
  }
  throw std::runtime_error("select_j: no refinement level meets the tolerance");
}

}  // namespace stlr

namespace stlr {

ContractionTable OperatorContext::contraction_table(const SpaceTimeVector& v) const {
  SpaceTimeVector work = v;
  return contractions(work);
}

ContractionTable OperatorContext::contraction_table_spatial(const HTensor& w) const {
  return spatial_table(w);
}

namespace {

// largest exponential-sum argument over the Cartesian product support
double support_arg(const ScalingTables& tables, const HTensor& h) {
  double s = 0.0;
  for (int m = 0; m < h.dims(); ++m) {
    double semi = 0.0;
    for (int id : h.leaf_ids(m)) semi = std::max(semi, tables.spatial().h1_seminorm_sq(id));
    s += semi;
  }
  return std::max(tables.s_min() * tables.s_min() * s, 1.0 + 1e-9);
}

}  // namespace

SpaceTimeVector OperatorContext::apply_tx_j(const SpaceTimeVector& u, const ShellPartition& pv, int j) const {
  SpaceTimeVector out(tree_);
  const int nsp = sp_->size();
  for (const auto& [t, h] : u.slices()) {
    std::vector<LeafOp> ops(d_);
    for (int m = 0; m < d_; ++m) {
      std::set<int> outs;
      for (int in : h.leaf_ids(m)) {
        const int p = pv.shell_of(m, t, in, j);
        if (p > j) continue;
        for (int o = 0; o < nsp; ++o)
          if (t2_->retained(o, in, j - p) && t2_->entry(o, in) != 0.0) outs.insert(o);
      }
      ops[m].out_ids.assign(outs.begin(), outs.end());
      ops[m].entry = [this, &pv, m, t, j](int o, int in) {
        const int p = pv.shell_of(m, t, in, j);
        if (p > j) return 0.0;
        return t2_->retained(o, in, j - p) ? t2_->entry(o, in) : 0.0;
      };
    }
    out.set_slice(t, apply_one_per_leaf(h, ops));
  }
  return out;
}

SpaceTimeVector OperatorContext::apply_tt_j(const SpaceTimeVector& u, const ShellPartition& pv, int j,
                                            bool transpose, double round_tol) const {
  std::map<int, std::vector<HTensor>> acc;
  const int ntt = tb_->size();
  for (int j2 = 0; j2 < j; ++j2) {
    const int band = j - j2 - 1;
    for (const auto& [mu, h] : u.slices()) {
      std::vector<std::vector<int>> keep(d_);
      bool empty = false;
      for (int m = 0; m < d_; ++m) {
        keep[m] = pv.cumulative_ids(m, mu, j2);
        if (keep[m].empty()) empty = true;
      }
      if (empty) continue;
      HTensor piece = h;
      piece.restrict_modes(keep);
      if (piece.is_structurally_zero()) continue;
      const int lmu = tb_->level_of(mu);
      for (int nu = 0; nu < ntt; ++nu) {
        if (std::abs(tb_->level_of(nu) - lmu) != band) continue;
        const double e = transpose ? tt_->entry(mu, nu) : tt_->entry(nu, mu);
        if (e == 0.0) continue;
        HTensor part = piece;
        part.scale(e);
        acc[nu].push_back(std::move(part));
      }
    }
  }
  SpaceTimeVector out(tree_);
  const double per_target = acc.empty() ? 0.0 : round_tol / std::sqrt(static_cast<double>(acc.size()));
  for (auto& [nu, parts] : acc) out.set_slice(nu, accumulate_rounded(std::move(parts), per_target));
  return out;
}

HTensor OperatorContext::apply_t0_j(const SpaceTimeVector& u, const ShellPartition& pv, int j,
                                    double round_tol) const {
  std::vector<HTensor> parts;
  // max active spatial level of the input
  int lx = 0;
  for (const auto& [t, h] : u.slices())
    for (int m = 0; m < d_; ++m)
      for (int id : h.leaf_ids(m)) lx = std::max(lx, sp_->level_of(id));

  for (int j2 = 0; j2 < j; ++j2) {
    const int band = j - j2 - 1;
    for (const auto& [mu, h] : u.slices()) {
      const double th0 = tb_->value_at_0(mu);
      if (th0 == 0.0) continue;
      std::vector<std::vector<int>> keep(d_);
      bool empty = false;
      for (int m = 0; m < d_; ++m) {
        keep[m] = pv.cumulative_ids(m, mu, j2);
        if (keep[m].empty()) empty = true;
      }
      if (empty) continue;
      HTensor piece = h;
      piece.restrict_modes(keep);
      if (piece.is_structurally_zero()) continue;
      const int lmu = tb_->level_of(mu);
      for (int l = 0; l <= lx; ++l) {
        if (std::abs(lmu - 2 * l) != band) continue;
        auto level_keep = [&](int cap) {
          std::vector<std::vector<int>> ids(d_);
          for (int m = 0; m < d_; ++m)
            for (int id : piece.leaf_ids(m))
              if (sp_->level_of(id) <= cap) ids[m].push_back(id);
          return ids;
        };
        HTensor rl = piece;
        rl.restrict_modes(level_keep(l));
        rl.scale(th0);
        if (!rl.is_structurally_zero()) parts.push_back(rl);
        if (l > 0) {
          HTensor rlm = piece;
          rlm.restrict_modes(level_keep(l - 1));
          rlm.scale(-th0);
          if (!rlm.is_structurally_zero()) parts.push_back(rlm);
        }
      }
    }
  }
  if (parts.empty()) return HTensor::zero(tree_);
  return accumulate_rounded(std::move(parts), round_tol);
}

SpaceTimeVector OperatorContext::apply_t0_adjoint_j(const HTensor& u, const ShellPartition& pw, int j,
                                                    double round_tol) const {
  std::map<int, std::vector<HTensor>> acc;
  int lx = 0;
  for (int m = 0; m < d_; ++m)
    for (int id : u.leaf_ids(m)) lx = std::max(lx, sp_->level_of(id));
  const int ntt = tb_->size();

  for (int j2 = 0; j2 < j; ++j2) {
    const int band = j - j2 - 1;
    std::vector<std::vector<int>> keep(d_);
    bool empty = false;
    for (int m = 0; m < d_; ++m) {
      keep[m] = pw.cumulative_ids(m, -1, j2);
      if (keep[m].empty()) empty = true;
    }
    if (empty) continue;
    HTensor wj = u;
    wj.restrict_modes(keep);
    if (wj.is_structurally_zero()) continue;
    for (int l = 0; l <= lx; ++l) {
      auto level_keep = [&](int cap) {
        std::vector<std::vector<int>> ids(d_);
        for (int m = 0; m < d_; ++m)
          for (int id : wj.leaf_ids(m))
            if (sp_->level_of(id) <= cap) ids[m].push_back(id);
        return ids;
      };
      HTensor rl = wj;
      rl.restrict_modes(level_keep(l));
      HTensor rlm;
      if (l > 0) {
        rlm = wj;
        rlm.restrict_modes(level_keep(l - 1));
        rlm.scale(-1.0);
      }
      for (int nu = 0; nu < ntt; ++nu) {
        if (std::abs(tb_->level_of(nu) - 2 * l) != band) continue;
        const double th0 = tb_->value_at_0(nu);
        if (th0 == 0.0) continue;
        if (!rl.is_structurally_zero()) {
          HTensor p = rl;
          p.scale(th0);
          acc[nu].push_back(std::move(p));
        }
        if (l > 0 && !rlm.is_structurally_zero()) {
          HTensor p = rlm;
          p.scale(th0);
          acc[nu].push_back(std::move(p));
        }
      }
    }
  }
  SpaceTimeVector out(tree_);
  const double per_target = acc.empty() ? 0.0 : round_tol / std::sqrt(static_cast<double>(acc.size()));
  for (auto& [nu, parts] : acc) out.set_slice(nu, accumulate_rounded(std::move(parts), per_target));
  return out;
}

SpaceTimeVector OperatorContext::apply_bx_j(const SpaceTimeVector& v, int j, double* e_out) const {
  SpaceTimeVector work = v;
  ContractionTable table = contractions(work);
  ShellPartition pv = build_partition(table);
  if (e_out) *e_out = error_x(pv, table, j);
  std::map<int, int> nlim;
  for (const auto& [t, h] : v.slices()) nlim[t] = tables_->limit_nx(t);
  SpaceTimeVector x = tables_->apply_dx(v, nlim, 0.0);
  SpaceTimeVector y = apply_tx_j(x, pv, j);
  std::map<int, int> ny;
  for (const auto& [t, h] : y.slices()) ny[t] = tables_->limit_ny();
  return tables_->apply_dy(y, ny, 0.0);
}

SpaceTimeVector OperatorContext::apply_bt_j(const SpaceTimeVector& v, int j, double* e_out) const {
  SpaceTimeVector work = v;
  ContractionTable table = contractions(work);
  ShellPartition pv = build_partition(table);
  if (e_out) *e_out = error_t(pv, table, j);
  std::map<int, int> nlim;
  for (const auto& [t, h] : v.slices()) nlim[t] = tables_->limit_nx(t);
  SpaceTimeVector x = tables_->apply_dx(v, nlim, 0.0);
  SpaceTimeVector y = apply_tt_j(x, pv, j, false);
  std::map<int, int> ny;
  for (const auto& [t, h] : y.slices()) ny[t] = tables_->limit_ny();
  return tables_->apply_dy(y, ny, 0.0);
}

std::map<int, int> OperatorContext::counts_x(const std::map<int, double>& k_per_slice, double zeta) const {
  std::map<int, int> out;
  for (const auto& [t, k] : k_per_slice) {
    const double a = tables_->a_t(t);
    out[t] = std::max(m_x(a, zeta, k, delta_), tables_->positivity_t(t));
  }
  return out;
}

std::map<int, int> OperatorContext::counts_y(const std::map<int, double>& k_per_slice, double zeta) const {
  std::map<int, int> out;
  const double h = step_size_y(delta_);
  for (const auto& [t, k] : k_per_slice) out[t] = std::max(m_y(zeta, k, delta_, h), 1);
  return out;
}

SpaceTimeVector OperatorContext::apply_b1(const SpaceTimeVector& v, double eta, ApplyReport* report) const {
  SpaceTimeVector out(tree_);
  if (v.empty()) return out;
  const double nv = v.norm();
  if (!(eta < 2.0 * norm_b1_ * nv)) {
    if (report) {
      report->j = 0;
      report->error_bound = norm_b1_ * nv;
    }
    return out;
  }
  const double eta_op = 0.9 * eta, eta_rnd = 0.1 * eta;
  SpaceTimeVector work = v;
  ContractionTable table = contractions(work);
  ShellPartition pv = build_partition(table);
  const int j = select_j(pv, table, eta_op, false);

  const double zeta = eta_op * (1.0 - delta_) / (4.0 * norm_b1_ * nv);
  std::map<int, double> k1;
  for (const auto& [t, h] : v.slices()) k1[t] = support_arg(*tables_, h);
  const std::map<int, int> n1 = counts_x(k1, zeta);

  SpaceTimeVector x = tables_->apply_dx(v, n1, 0.0);
  SpaceTimeVector y = SpaceTimeVector::axpy(1.0, apply_tx_j(x, pv, j),
                                            apply_tt_j(x, pv, j, false, 0.25 * eta_rnd));
  y = recompress(y, 0.25 * eta_rnd);

  std::map<int, double> k2;
  for (const auto& [t, h] : y.slices()) k2[t] = support_arg(*tables_, h);
  const std::map<int, int> n2 = counts_y(k2, zeta);
  out = tables_->apply_dy(y, n2, 0.5 * eta_rnd);
  if (report) {
    report->j = j;
    report->error_bound = eta;
    report->e_functional = error_total(pv, table, j);
    report->n_x = n1;
    report->n_y = n2;
  }
  return out;
}

SpaceTimeVector OperatorContext::apply_b1_transpose(const SpaceTimeVector& v, double eta,
                                                    ApplyReport* report) const {
  SpaceTimeVector out(tree_);
  if (v.empty()) return out;
  const double nv = v.norm();
  if (!(eta < 2.0 * norm_b1_ * nv)) {
    if (report) {
      report->j = 0;
      report->error_bound = norm_b1_ * nv;
    }
    return out;
  }
  const double eta_op = 0.9 * eta, eta_rnd = 0.1 * eta;
  SpaceTimeVector work = v;
  ContractionTable table = contractions(work);
  ShellPartition pv = build_partition(table);
  const int j = select_j(pv, table, eta_op, false);

  const double zeta = eta_op * (1.0 - delta_) / (4.0 * norm_b1_ * nv);
  std::map<int, double> k2;
  for (const auto& [t, h] : v.slices()) k2[t] = support_arg(*tables_, h);
  const std::map<int, int> n2 = counts_y(k2, zeta);

  SpaceTimeVector x = tables_->apply_dy(v, n2, 0.0);
  SpaceTimeVector y = SpaceTimeVector::axpy(1.0, apply_tx_j(x, pv, j),
                                            apply_tt_j(x, pv, j, true, 0.25 * eta_rnd));
  y = recompress(y, 0.25 * eta_rnd);

  std::map<int, double> k1;
  for (const auto& [t, h] : y.slices()) k1[t] = support_arg(*tables_, h);
  const std::map<int, int> n1 = counts_x(k1, zeta);
  out = tables_->apply_dx(y, n1, 0.5 * eta_rnd);
  if (report) {
    report->j = j;
    report->error_bound = eta;
    report->e_functional = error_total(pv, table, j);
    report->n_x = n1;
    report->n_y = n2;
  }
  return out;
}

HTensor OperatorContext::apply_b2(const SpaceTimeVector& v, double eta, ApplyReport* report) const {
  if (v.empty()) return HTensor::zero(tree_);
  const double nv = v.norm();
  if (!(eta < 2.0 * norm_b2_ * nv)) {
    if (report) report->error_bound = norm_b2_ * nv;
    return HTensor::zero(tree_);
  }
  const double eta_op = 0.9 * eta, eta_rnd = 0.1 * eta;
  SpaceTimeVector work = v;
  ContractionTable table = contractions(work);
  ShellPartition pv = build_partition(table);
  const int j = select_j(pv, table, eta_op, false, true);

  const double zeta = eta_op * (1.0 - delta_) / (2.0 * norm_b2_ * nv);
  std::map<int, double> k0;
  for (const auto& [t, h] : v.slices()) k0[t] = support_arg(*tables_, h);
  const std::map<int, int> n = counts_x(k0, zeta);
  SpaceTimeVector x = tables_->apply_dx(v, n, 0.0);
  HTensor out = apply_t0_j(x, pv, j, eta_rnd);
  if (report) {
    report->j = j;
    report->error_bound = eta;
    report->e_functional = error_t0(pv, table, j);
    report->n_x = n;
  }
  return out;
}

SpaceTimeVector OperatorContext::apply_b2_transpose(const HTensor& w, double eta, ApplyReport* report) const {
  SpaceTimeVector out(tree_);
  if (!w.valid() || w.is_structurally_zero()) return out;
  const double nw = w.norm();
  if (!(eta < 2.0 * norm_b2_ * nw)) {
    if (report) report->error_bound = norm_b2_ * nw;
    return out;
  }
  const double eta_op = 0.9 * eta, eta_rnd = 0.1 * eta;
  ContractionTable table = spatial_table(w);
  ShellPartition pw = build_partition(table);
  const int j = select_j(pw, table, eta_op, false, true);

  SpaceTimeVector y = apply_t0_adjoint_j(w, pw, j, 0.5 * eta_rnd);
  const double zeta = eta_op * (1.0 - delta_) / (2.0 * norm_b2_ * nw);
  std::map<int, double> kad;
  for (const auto& [t, h] : y.slices()) kad[t] = support_arg(*tables_, h);
  const std::map<int, int> n = counts_x(kad, zeta);
  out = tables_->apply_dx(y, n, 0.5 * eta_rnd);
  if (report) {
    report->j = j;
    report->error_bound = eta;
    report->e_functional = error_t0(pw, table, j);
    report->n_x = n;
  }
  return out;
}

SpaceTimeVector OperatorContext::apply_normal(const SpaceTimeVector& v, double eta) const {
  const double nb = norm_b();
  SpaceTimeVector b1v = apply_b1(v, eta / (4.0 * nb));
  SpaceTimeVector part1 = apply_b1_transpose(b1v, eta / 4.0);
  HTensor b2v = apply_b2(v, eta / (4.0 * nb));
  SpaceTimeVector part2 = apply_b2_transpose(b2v, eta / 4.0);
  return SpaceTimeVector::axpy(1.0, part1, part2);
}

SpaceTimeVector OperatorContext::rhs(const RhsData& data, double eta) const {
  SpaceTimeVector out(tree_);
  const double nb = norm_b();
  if (!data.g1.empty()) {
    // f1 = D_Y g1 within eta/(4||B||)
    double maxdiag = 0.0;
    for (const auto& [t, h] : data.g1.slices()) {
      double smin_slice = 0.0;
      for (int m = 0; m < d_; ++m) {
        double lo = 1e300;
        for (int id : h.leaf_ids(m)) lo = std::min(lo, sp_->h1_seminorm_sq(id));
        smin_slice += lo;
      }
      maxdiag = std::max(maxdiag, 1.0 / std::sqrt(smin_slice));
    }
    const double zeta1 = eta / (4.0 * nb);
    const double rel = zeta1 / ((1.0 + delta_) * maxdiag * std::max(data.g1.norm(), 1e-300));
    std::map<int, double> kg;
    for (const auto& [t, h] : data.g1.slices()) kg[t] = support_arg(*tables_, h);
    const std::map<int, int> n = counts_y(kg, std::min(rel, 0.5));
    SpaceTimeVector f1 = tables_->apply_dy(data.g1, n, 0.0);
    out = apply_b1_transpose(f1, eta / 4.0);
  }
  if (data.g2.valid() && !data.g2.is_structurally_zero()) {
    SpaceTimeVector part2 = apply_b2_transpose(data.g2, eta / 4.0);
    out = SpaceTimeVector::axpy(1.0, part2, out);
  }
  return out;
}

}  // namespace stlr
