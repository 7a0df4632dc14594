#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stlr/piecewise_polynomial.hpp"

namespace stlr {

enum class BasisKind { Temporal, SpatialDirichlet };

struct WaveletIndex {
  int level = 0;
  int translation = 0;
  int generator = 0;

  friend bool operator==(const WaveletIndex&, const WaveletIndex&) = default;
};

/// Orthonormal multiwavelet basis of L2(0, length), piecewise polynomial of
/// degree `order` and C^1 across interior breakpoints.
///
/// The construction is numerical. For each level, compactly supported
/// pre-wavelets spanning the orthogonal complement of the coarse spline space
/// are obtained from local nullspace problems on sliding cell windows; a
/// symmetric (Loewdin) orthonormalization within the level then yields the
/// final wavelets, whose coefficients are truncated at 1e-13 relative so that
/// supports stay proportional to 2^{-level}. Level 0 holds the orthonormalized
/// scaling functions. The spatial-Dirichlet variant restricts every space to
/// functions vanishing at both endpoints.
class MultiwaveletBasis {
 public:
  /// Builds (or fetches from a process-wide cache) a basis. Throws
  /// std::invalid_argument for order < 2 or length <= 0.
  static std::shared_ptr<const MultiwaveletBasis> build(BasisKind kind, int order, double length, int max_level);

  BasisKind kind() const { return kind_; }
  int order() const { return order_; }
  double length() const { return length_; }
  int max_level() const { return max_level_; }

  int size() const { return static_cast<int>(fn_.size()); }
  int level_count(int level) const;
  int level_offset(int level) const;
  int positions(int level) const;
  int multiplicity(int level) const;

  int flat_index(const WaveletIndex& idx) const;
  WaveletIndex unflatten(int ordinal) const;
  bool constructible(const WaveletIndex& idx) const;
  int level_of(int ordinal) const;

  const PiecewisePolynomial& function(int ordinal) const { return fn_[ordinal]; }
  const PiecewisePolynomial& derivative(int ordinal) const { return dfn_[ordinal]; }

  /// Exact evaluation; throws std::domain_error for x outside [0, length].
  double evaluate(int ordinal, double x) const;

  double h1_seminorm_sq(int ordinal) const { return h1_semi_[ordinal]; }
  double h1_norm_sq(int ordinal) const { return 1.0 + h1_semi_[ordinal]; }
  double value_at_0(int ordinal) const { return val0_[ordinal]; }
  double value_at_end(int ordinal) const { return valend_[ordinal]; }

  /// max over wavelets of diam(supp) * 2^level / length; a property of the
  /// constructed family, recorded rather than assumed.
  double support_scale_constant() const { return support_constant_; }

  double min_h1_seminorm_sq() const { return min_h1_semi_; }

 private:
  MultiwaveletBasis(BasisKind kind, int order, double length, int max_level);
  void construct();
  void build_level0();
  void build_wavelet_level(int level);

  BasisKind kind_;
  int order_;
  double length_;
  int max_level_;

  std::vector<PiecewisePolynomial> fn_;
  std::vector<PiecewisePolynomial> dfn_;
  std::vector<double> h1_semi_;
  std::vector<double> val0_, valend_;
  std::vector<int> level_offset_;  // size max_level_+2
  double support_constant_ = 0.0;
  double min_h1_semi_ = 0.0;
};

/// Clamped B-spline basis of degree p with exactly C^1 smoothness (interior
/// knot multiplicity p-1) on n uniform cells of [0, L]. With `dirichlet`, the
/// two endpoint-interpolating functions are dropped.
std::vector<PiecewisePolynomial> c1_spline_basis(int p, int n, double L, bool dirichlet);

}  // namespace stlr
