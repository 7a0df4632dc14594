#include "stlr/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace stlr {

FiniteSection::FiniteSection(const OperatorContext& ctx, int temporal_cap, int spatial_cap, std::size_t cap) {
  d_ = ctx.dims();
  const auto& tb = ctx.temporal_basis();
  const auto& sp = ctx.spatial_basis();
  nt_ = tb.level_offset(std::min(temporal_cap, tb.max_level()) + 1);
  nx_ = sp.level_offset(std::min(spatial_cap, sp.max_level()) + 1);
  size_x_ = 1;
  for (int m = 0; m < d_; ++m) size_x_ *= static_cast<std::size_t>(nx_);
  if (size() > cap) throw std::invalid_argument("FiniteSection: size cap exceeded");
}

std::vector<double> FiniteSection::to_dense(const SpaceTimeVector& v) const {
  std::vector<double> out(size(), 0.0);
  for (const auto& [t, h] : v.slices()) {
    if (t >= nt_) throw std::invalid_argument("to_dense: slice outside the section");
    auto d = h.to_dense();
    std::vector<std::size_t> local(d_, 0);
    for (std::size_t f = 0; f < d.size(); ++f) {
      std::size_t rem = f;
      for (int m = d_ - 1; m >= 0; --m) {
        local[m] = rem % h.leaf_ids(m).size();
        rem /= h.leaf_ids(m).size();
      }
      std::size_t flat = 0;
      bool ok = true;
      for (int m = 0; m < d_; ++m) {
        const int id = h.leaf_ids(m)[local[m]];
        if (id >= nx_) ok = false;
        flat = flat * nx_ + id;
      }
      if (!ok) throw std::invalid_argument("to_dense: index outside the section");
      out[static_cast<std::size_t>(t) * size_x_ + flat] += d[f];
    }
  }
  return out;
}

std::vector<double> FiniteSection::to_dense_spatial(const HTensor& h) const {
  std::vector<double> out(size_x_, 0.0);
  if (!h.valid() || h.is_structurally_zero()) return out;
  auto d = h.to_dense();
  std::vector<std::size_t> local(d_, 0);
  for (std::size_t f = 0; f < d.size(); ++f) {
    std::size_t rem = f;
    for (int m = d_ - 1; m >= 0; --m) {
      local[m] = rem % h.leaf_ids(m).size();
      rem /= h.leaf_ids(m).size();
    }
    std::size_t flat = 0;
    for (int m = 0; m < d_; ++m) flat = flat * nx_ + h.leaf_ids(m)[local[m]];
    out[flat] += d[f];
  }
  return out;
}

SpaceTimeVector FiniteSection::from_dense(std::span<const double> data, const OperatorContext& ctx) const {
  SpaceTimeVector v(ctx.tree());
  std::vector<int> ids(nx_);
  for (int i = 0; i < nx_; ++i) ids[i] = i;
  std::vector<std::vector<int>> leaf_ids(d_, ids);
  for (int t = 0; t < nt_; ++t) {
    std::span<const double> slice = data.subspan(static_cast<std::size_t>(t) * size_x_, size_x_);
    bool nonzero = false;
    for (double x : slice)
      if (x != 0.0) nonzero = true;
    if (!nonzero) continue;
    v.set_slice(t, HTensor::from_dense(ctx.tree(), leaf_ids, slice));
  }
  return v;
}

HTensor FiniteSection::from_dense_spatial(std::span<const double> data, const OperatorContext& ctx) const {
  std::vector<int> ids(nx_);
  for (int i = 0; i < nx_; ++i) ids[i] = i;
  std::vector<std::vector<int>> leaf_ids(d_, ids);
  return HTensor::from_dense(ctx.tree(), leaf_ids, data);
}

DenseOracle::DenseOracle(const OperatorContext& ctx, FiniteSection section, Scaling scaling)
    : ctx_(ctx), sec_(std::move(section)) {
  const auto& tables = ctx.tables();
  const int d = sec_.dims(), nx = sec_.nx(), nt = sec_.nt();
  // spatial arguments per multi-index
  std::vector<double> sarg(sec_.size_x());
  std::vector<int> idx(d, 0);
  for (std::size_t f = 0; f < sec_.size_x(); ++f) {
    std::size_t rem = f;
    double s = 0.0;
    for (int m = d - 1; m >= 0; --m) {
      idx[m] = static_cast<int>(rem % nx);
      rem /= nx;
      s += ctx.spatial_basis().h1_seminorm_sq(idx[m]);
    }
    sarg[f] = tables.s_min() * tables.s_min() * s;
  }
  dy_.resize(sec_.size_x());
  for (std::size_t f = 0; f < sec_.size_x(); ++f) {
    if (scaling == Scaling::Converged) {
      dy_[f] = tables.sy_limit_arg(sarg[f]);
    } else {
      dy_[f] = tables.s_min() / std::sqrt(sarg[f]);  // exact 1/|Psi| in argument form
    }
  }
  dx_.resize(sec_.size());
  theta0_.resize(nt);
  for (int t = 0; t < nt; ++t) {
    theta0_[t] = ctx.temporal_basis().value_at_0(t);
    const double theta_h1 = std::sqrt(ctx.temporal_basis().h1_norm_sq(t));
    for (std::size_t f = 0; f < sec_.size_x(); ++f) {
      if (scaling == Scaling::Converged) {
        dx_[static_cast<std::size_t>(t) * sec_.size_x() + f] = tables.sx_limit_arg(t, sarg[f]);
      } else {
        const double psi2 = sarg[f] / (tables.s_min() * tables.s_min());
        dx_[static_cast<std::size_t>(t) * sec_.size_x() + f] = std::sqrt(psi2) / (psi2 + theta_h1);
      }
    }
  }
}

std::vector<double> DenseOracle::apply_b1(std::span<const double> v) const {
  auto out = apply_bx(v);
  auto bt = apply_bt(v);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bt[i];
  return out;
}

std::vector<double> DenseOracle::apply_bx(std::span<const double> v) const {
  const int d = sec_.dims(), nx = sec_.nx(), nt = sec_.nt();
  const std::size_t sx = sec_.size_x();
  std::vector<double> w(sec_.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dx_[i] * v[i];
  std::vector<double> out(sec_.size(), 0.0);
  // spatial: sum over dims of T2 along the dim
  for (int t = 0; t < nt; ++t) {
    for (int m = 0; m < d; ++m) {
      std::size_t stride = 1;
      for (int q = d - 1; q > m; --q) stride *= nx;
      const std::size_t outer = sx / (stride * nx);
      for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t b = 0; b < stride; ++b) {
          const std::size_t base = static_cast<std::size_t>(t) * sx + a * stride * nx + b;
          for (int i = 0; i < nx; ++i) {
            double s = 0.0;
            for (int k = 0; k < nx; ++k) s += ctx_.t2().entry(i, k) * w[base + static_cast<std::size_t>(k) * stride];
            out[base + static_cast<std::size_t>(i) * stride] += s;
          }
        }
    }
  }
  for (int t = 0; t < nt; ++t)
    for (std::size_t f = 0; f < sx; ++f) out[static_cast<std::size_t>(t) * sx + f] *= dy_[f];
  return out;
}

std::vector<double> DenseOracle::apply_bt(std::span<const double> v) const {
  const int nt = sec_.nt();
  const std::size_t sx = sec_.size_x();
  std::vector<double> w(sec_.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dx_[i] * v[i];
  std::vector<double> out(sec_.size(), 0.0);
  for (int t = 0; t < nt; ++t)
    for (int u = 0; u < nt; ++u) {
      const double e = ctx_.tt().entry(t, u);
      if (e == 0.0) continue;
      for (std::size_t f = 0; f < sx; ++f)
        out[static_cast<std::size_t>(t) * sx + f] += e * w[static_cast<std::size_t>(u) * sx + f];
    }
  for (int t = 0; t < nt; ++t)
    for (std::size_t f = 0; f < sx; ++f) out[static_cast<std::size_t>(t) * sx + f] *= dy_[f];
  return out;
}

std::vector<double> DenseOracle::apply_b1_transpose(std::span<const double> v) const {
  const int d = sec_.dims(), nx = sec_.nx(), nt = sec_.nt();
  const std::size_t sx = sec_.size_x();
  std::vector<double> w(sec_.size());
  for (int t = 0; t < nt; ++t)
    for (std::size_t f = 0; f < sx; ++f)
      w[static_cast<std::size_t>(t) * sx + f] = dy_[f] * v[static_cast<std::size_t>(t) * sx + f];
  std::vector<double> out(sec_.size(), 0.0);
  for (int t = 0; t < nt; ++t) {
    for (int m = 0; m < d; ++m) {
      std::size_t stride = 1;
      for (int q = d - 1; q > m; --q) stride *= nx;
      const std::size_t outer = sx / (stride * nx);
      for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t b = 0; b < stride; ++b) {
          const std::size_t base = static_cast<std::size_t>(t) * sx + a * stride * nx + b;
          for (int i = 0; i < nx; ++i) {
            double s = 0.0;
            for (int k = 0; k < nx; ++k) s += ctx_.t2().entry(k, i) * w[base + static_cast<std::size_t>(k) * stride];
            out[base + static_cast<std::size_t>(i) * stride] += s;
          }
        }
    }
  }
  for (int t = 0; t < nt; ++t)
    for (int u = 0; u < nt; ++u) {
      const double e = ctx_.tt().entry(u, t);
      if (e == 0.0) continue;
      for (std::size_t f = 0; f < sx; ++f)
        out[static_cast<std::size_t>(t) * sx + f] += e * w[static_cast<std::size_t>(u) * sx + f];
    }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= dx_[i];
  return out;
}

std::vector<double> DenseOracle::apply_b2(std::span<const double> v) const {
  const int nt = sec_.nt();
  const std::size_t sx = sec_.size_x();
  std::vector<double> out(sx, 0.0);
  for (int t = 0; t < nt; ++t) {
    if (theta0_[t] == 0.0) continue;
    for (std::size_t f = 0; f < sx; ++f)
      out[f] += theta0_[t] * dx_[static_cast<std::size_t>(t) * sx + f] * v[static_cast<std::size_t>(t) * sx + f];
  }
  return out;
}

std::vector<double> DenseOracle::apply_b2_transpose(std::span<const double> w) const {
  const int nt = sec_.nt();
  const std::size_t sx = sec_.size_x();
  std::vector<double> out(sec_.size(), 0.0);
  for (int t = 0; t < nt; ++t) {
    if (theta0_[t] == 0.0) continue;
    for (std::size_t f = 0; f < sx; ++f)
      out[static_cast<std::size_t>(t) * sx + f] = theta0_[t] * dx_[static_cast<std::size_t>(t) * sx + f] * w[f];
  }
  return out;
}

std::vector<double> DenseOracle::apply_normal(std::span<const double> v) const {
  auto b1 = apply_b1(v);
  auto out = apply_b1_transpose(b1);
  auto b2 = apply_b2(v);
  auto bt = apply_b2_transpose(b2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bt[i];
  return out;
}

std::vector<double> DenseOracle::rhs_vector(const RhsData& data) const {
  // B^T f with f = [D_Y g1; g2]
  std::vector<double> f1 = sec_.to_dense(data.g1);
  const std::size_t sx = sec_.size_x();
  for (int t = 0; t < sec_.nt(); ++t)
    for (std::size_t f = 0; f < sx; ++f) f1[static_cast<std::size_t>(t) * sx + f] *= dy_[f];
  auto out = apply_b1_transpose(f1);
  if (data.g2.valid() && !data.g2.is_structurally_zero()) {
    auto f2 = sec_.to_dense_spatial(data.g2);
    auto bt = apply_b2_transpose(f2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bt[i];
  }
  return out;
}

std::vector<double> DenseOracle::solve_normal(std::span<const double> rhs, double rel_tol, int max_iter) const {
  const std::size_t n = rhs.size();
  std::vector<double> x(n, 0.0), r(rhs.begin(), rhs.end()), p = r;
  double rr = dot(r, r);
  const double target = rel_tol * rel_tol * rr;
  for (int it = 0; it < max_iter && rr > target && rr > 0.0; ++it) {
    auto ap = apply_normal(p);
    const double alpha = rr / dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  return x;
}

double DenseOracle::lambda_max(int iters) const {
  std::vector<double> v(sec_.size(), 1.0);
  double nrm = norm2(v);
  for (double& x : v) x /= nrm;
  double lam = 0.0;
  for (int it = 0; it < iters; ++it) {
    auto av = apply_normal(v);
    const double an = norm2(av);
    if (an == 0.0) return 0.0;
    lam = an;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] / an;
  }
  return lam;
}

double DenseOracle::lambda_min(int iters, double cg_tol) const {
  std::vector<double> v(sec_.size(), 1.0);
  // remove the dominant direction a little: random-ish perturbation
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.3 * std::sin(1.0 + 2.7 * static_cast<double>(i));
  double nrm = norm2(v);
  for (double& x : v) x /= nrm;
  double lam = 0.0;
  for (int it = 0; it < iters; ++it) {
    auto w = solve_normal(v, cg_tol, 4000);
    const double wn = norm2(w);
    if (wn == 0.0) return 0.0;
    lam = 1.0 / wn;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / wn;
  }
  return lam;
}

}  // namespace stlr
