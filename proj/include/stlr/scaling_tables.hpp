#pragma once

#include <map>
#include <memory>

#include "stlr/expsum.hpp"
#include "stlr/spacetime_vector.hpp"
#include "stlr/wavelet_basis.hpp"

namespace stlr {

/// Diagonal trial/test rescalings for the space-time system: exact values,
/// their exponential-sum surrogates, and application to low-rank vectors.
///
/// The argument fed to the exponential sums is s = S_min^2 |Psi|_{H1}^2,
/// which is >= 1 for every constructible spatial index by the choice of
/// S_min = (sqrt(d) * min single-factor seminorm)^{-1/2-power convention
/// below}; see s_min().
class ScalingTables {
 public:
  ScalingTables(std::shared_ptr<const MultiwaveletBasis> temporal,
                std::shared_ptr<const MultiwaveletBasis> spatial, int d, double delta);

  const MultiwaveletBasis& temporal() const { return *temporal_; }
  const MultiwaveletBasis& spatial() const { return *spatial_; }
  int dims() const { return d_; }
  double delta() const { return delta_; }

  double s_min() const { return s_min_; }
  /// Largest exponential-sum argument over the constructible section.
  double s_arg_max() const { return s_arg_max_; }

  /// Exponential-sum argument of a spatial multi-index.
  double s_arg(std::span<const int> x_ords) const;
  double s_arg_1d(int x_ord) const { return s_min_ * s_min_ * spatial_->h1_seminorm_sq(x_ord); }

  double a_t(int t_ord) const;  // s_min^4 * ||theta||_{H1}^2
  double h_t(int t_ord) const { return step_size_x(a_t(t_ord), delta_); }
  int positivity_t(int t_ord) const { return positivity_threshold_x(a_t(t_ord), delta_); }

  /// Exact diagonal entries.
  double sx_exact(int t_ord, std::span<const int> x_ords) const;
  double sy_exact(std::span<const int> x_ords) const;

  /// Exponential-sum values with n terms on the negative side.
  double sx_n(int t_ord, int n, std::span<const int> x_ords) const;
  double sy_n(int n, std::span<const int> x_ords) const;

  /// Converged surrogates (relative error ~1e-13 over the section), used as
  /// the reference scalings the solver targets.
  double sx_limit(int t_ord, std::span<const int> x_ords) const;
  double sy_limit(std::span<const int> x_ords) const;
  double sx_limit_arg(int t_ord, double s) const { return s_min_ * limit_x(t_ord).eval(s); }
  double sy_limit_arg(double s) const { return s_min_ * limit_y_.eval(s); }

  const ExpSumScaling& limit_x(int t_ord) const;
  const ExpSumScaling& limit_y() const { return limit_y_; }
  int limit_nx(int t_ord) const;
  int limit_ny() const { return limit_ny_; }

  /// Applies the n-term X scaling to one spatial component associated with a
  /// temporal index. Throws when n is below the positivity threshold.
  /// round_tol > 0 rounds the accumulated sum with that certified budget.
  HTensor apply_dx_slice(const HTensor& h, int t_ord, int n, double round_tol) const;
  HTensor apply_dy_slice(const HTensor& h, int n, double round_tol) const;

  SpaceTimeVector apply_dx(const SpaceTimeVector& v, const std::map<int, int>& n_per_slice,
                           double round_tol) const;
  SpaceTimeVector apply_dy(const SpaceTimeVector& v, const std::map<int, int>& n_per_slice,
                           double round_tol) const;

 private:
  HTensor apply_expsum(const HTensor& h, const ExpSumScaling& es, double round_tol) const;

  std::shared_ptr<const MultiwaveletBasis> temporal_;
  std::shared_ptr<const MultiwaveletBasis> spatial_;
  int d_;
  double delta_;
  double s_min_ = 0.0;
  double s_arg_max_ = 0.0;
  mutable std::map<int, ExpSumScaling> limit_x_;  // per temporal ordinal
  mutable std::map<int, int> limit_nx_;
  ExpSumScaling limit_y_;
  int limit_ny_ = 0;
};

}  // namespace stlr
