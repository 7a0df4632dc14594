#pragma once

#include <memory>
#include <vector>

#include "stlr/dense_linalg.hpp"
#include "stlr/wavelet_basis.hpp"

namespace stlr {

/// Dense one-dimensional operator tables over all constructible indices of a
/// basis, together with the level-banded compression rule and measured decay
/// of the rescaled compression errors.
///
/// Entries are exact integrals; the time-derivative entries are evaluated in
/// antisymmetrized form plus boundary terms so that the integration-by-parts
/// identity holds to roundoff.
class WaveletOperator {
 public:
  enum class Kind { SpatialStiffness, TemporalDerivative };

  static std::shared_ptr<const WaveletOperator> build(std::shared_ptr<const MultiwaveletBasis> basis, Kind kind);

  Kind kind() const { return kind_; }
  const MultiwaveletBasis& basis() const { return *basis_; }
  int size() const { return static_cast<int>(table_.rows()); }

  double entry(int i, int j) const { return table_(i, j); }

  /// Level-banded retention rule for the j-th approximation: the stiffness
  /// keeps |level(a)-level(b)| <= j; the derivative keeps |...| <= j-1 with an
  /// empty zeroth approximation.
  bool retained(int a, int b, int j) const;

  /// Entry of the j-th approximation (exact where retained, zero elsewhere).
  double entry_compressed(int a, int b, int j) const { return retained(a, b, j) ? table_(a, b) : 0.0; }

  /// Measured spectral norm of the rescaled error D (T - T_j) D on the full
  /// table section, with a 1.05 safety factor; bound(j) is nonincreasing and
  /// reaches zero once the band covers the section.
  double bound(int j) const;
  int bound_count() const { return static_cast<int>(bounds_.size()); }

  /// Measured norm of the rescaled operator itself (j = 0 error for the
  /// derivative; assembled directly for the stiffness).
  double scaled_norm() const { return scaled_norm_; }

  /// Measured super-compressibility constant: max count per row/column of
  /// rescaled band entries above 1e-10.
  int nnz_per_row_bound() const { return c_super_; }

  double scaling_weight(int i) const { return dscale_[i]; }

 private:
  WaveletOperator(std::shared_ptr<const MultiwaveletBasis> basis, Kind kind);
  void assemble();
  void measure();

  std::shared_ptr<const MultiwaveletBasis> basis_;
  Kind kind_;
  Matrix table_;
  std::vector<double> dscale_;   // H^1-type diagonal weights used in the rescaling
  std::vector<double> bounds_;   // measured ||D (T - T_j) D|| per band j
  double scaled_norm_ = 0.0;
  int c_super_ = 0;
};

}  // namespace stlr
