#include "stlr/scaling_tables.hpp"

#include <cmath>
#include <stdexcept>

namespace stlr {

ScalingTables::ScalingTables(std::shared_ptr<const MultiwaveletBasis> temporal,
                             std::shared_ptr<const MultiwaveletBasis> spatial, int d, double delta)
    : temporal_(std::move(temporal)), spatial_(std::move(spatial)), d_(d), delta_(delta) {
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("ScalingTables: delta outside (0,1)");
  double min_semi = 1e300, max_semi = 0.0;
  for (int i = 0; i < spatial_->size(); ++i) {
    min_semi = std::min(min_semi, spatial_->h1_seminorm_sq(i));
    max_semi = std::max(max_semi, spatial_->h1_seminorm_sq(i));
  }
  s_min_ = 1.0 / std::sqrt(d_ * min_semi);
  s_arg_max_ = s_min_ * s_min_ * d_ * max_semi;

  limit_ny_ = std::max(m_y(1e-13, s_arg_max_, delta_, step_size_y(delta_)), 1);
  limit_y_ = build_expsum_y(delta_, limit_ny_);
}

double ScalingTables::s_arg(std::span<const int> x_ords) const {
  double s = 0.0;
  for (int o : x_ords) s += spatial_->h1_seminorm_sq(o);
  return s_min_ * s_min_ * s;
}

double ScalingTables::a_t(int t_ord) const {
  return std::pow(s_min_, 4.0) * temporal_->h1_norm_sq(t_ord);
}

double ScalingTables::sx_exact(int t_ord, std::span<const int> x_ords) const {
  double psi2 = 0.0;
  for (int o : x_ords) psi2 += spatial_->h1_seminorm_sq(o);
  const double theta = std::sqrt(temporal_->h1_norm_sq(t_ord));
  return std::sqrt(psi2) / (psi2 + theta);
}

double ScalingTables::sy_exact(std::span<const int> x_ords) const {
  double psi2 = 0.0;
  for (int o : x_ords) psi2 += spatial_->h1_seminorm_sq(o);
  return 1.0 / std::sqrt(psi2);
}

double ScalingTables::sx_n(int t_ord, int n, std::span<const int> x_ords) const {
  ExpSumScaling es = build_expsum_x(a_t(t_ord), delta_, n);
  return s_min_ * es.eval(s_arg(x_ords));
}

double ScalingTables::sy_n(int n, std::span<const int> x_ords) const {
  ExpSumScaling es = build_expsum_y(delta_, n);
  return s_min_ * es.eval(s_arg(x_ords));
}

const ExpSumScaling& ScalingTables::limit_x(int t_ord) const {
  auto it = limit_x_.find(t_ord);
  if (it != limit_x_.end()) return it->second;
  const double a = a_t(t_ord);
  const int n = std::max(m_x(a, 1e-13, s_arg_max_, delta_), positivity_threshold_x(a, delta_));
  limit_nx_[t_ord] = n;
  return limit_x_.emplace(t_ord, build_expsum_x(a, delta_, n)).first->second;
}

int ScalingTables::limit_nx(int t_ord) const {
  limit_x(t_ord);
  return limit_nx_[t_ord];
}

double ScalingTables::sx_limit(int t_ord, std::span<const int> x_ords) const {
  return s_min_ * limit_x(t_ord).eval(s_arg(x_ords));
}

double ScalingTables::sy_limit(std::span<const int> x_ords) const {
  return s_min_ * limit_y_.eval(s_arg(x_ords));
}

HTensor ScalingTables::apply_expsum(const HTensor& h, const ExpSumScaling& es, double round_tol) const {
  if (!h.valid() || h.is_structurally_zero()) return h;
  const int d = h.dims();

  // per-term separable diagonal action, accumulated with certified rounding
  std::vector<HTensor> parts;
  parts.reserve(es.terms.size());
  for (const ExpSumTerm& term : es.terms) {
    std::vector<std::vector<double>> diag(d);
    bool vanishes = false;
    for (int m = 0; m < d; ++m) {
      diag[m].resize(h.leaf_ids(m).size());
      for (std::size_t i = 0; i < diag[m].size(); ++i) {
        const double e = term.exponent * s_arg_1d(h.leaf_ids(m)[i]);
        diag[m][i] = (e > 700.0) ? 0.0 : std::exp(-e);
      }
    }
    if (vanishes) continue;
    HTensor part = h;
    part.apply_rank1_diagonal(diag);
    part.scale(s_min_ * term.weight);
    parts.push_back(std::move(part));
  }
  if (parts.empty()) return HTensor::zero(h.tree_ptr());

  // pairwise tree accumulation; each merge is rounded with its share
  const double per_merge = (parts.size() > 1 && round_tol > 0.0)
                               ? round_tol / static_cast<double>(parts.size() - 1)
                               : 0.0;
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

HTensor ScalingTables::apply_dx_slice(const HTensor& h, int t_ord, int n, double round_tol) const {
  const int n_min = positivity_t(t_ord);
  if (n < n_min)
    throw std::invalid_argument("apply_dx_slice: term count below the positivity threshold");
  ExpSumScaling es = build_expsum_x(a_t(t_ord), delta_, n);
  return apply_expsum(h, es, round_tol);
}

HTensor ScalingTables::apply_dy_slice(const HTensor& h, int n, double round_tol) const {
  ExpSumScaling es = build_expsum_y(delta_, n);
  return apply_expsum(h, es, round_tol);
}

SpaceTimeVector ScalingTables::apply_dx(const SpaceTimeVector& v, const std::map<int, int>& n_per_slice,
                                        double round_tol) const {
  SpaceTimeVector out(v.tree_ptr());
  const double per_slice =
      v.slice_count() ? round_tol / std::sqrt(static_cast<double>(v.slice_count())) : 0.0;
  for (const auto& [t, h] : v.slices()) {
    auto it = n_per_slice.find(t);
    if (it == n_per_slice.end()) throw std::invalid_argument("apply_dx: missing term count for a slice");
    out.set_slice(t, apply_dx_slice(h, t, it->second, per_slice));
  }
  return out;
}

SpaceTimeVector ScalingTables::apply_dy(const SpaceTimeVector& v, const std::map<int, int>& n_per_slice,
                                        double round_tol) const {
  SpaceTimeVector out(v.tree_ptr());
  const double per_slice =
      v.slice_count() ? round_tol / std::sqrt(static_cast<double>(v.slice_count())) : 0.0;
  for (const auto& [t, h] : v.slices()) {
    auto it = n_per_slice.find(t);
    if (it == n_per_slice.end()) throw std::invalid_argument("apply_dy: missing term count for a slice");
    out.set_slice(t, apply_dy_slice(h, it->second, per_slice));
  }
  return out;
}

}  // namespace stlr
