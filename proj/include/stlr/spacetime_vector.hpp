#pragma once

#include <map>
#include <memory>
#include <vector>

#include "stlr/htensor.hpp"

namespace stlr {

/// Finite map from temporal wavelet ordinals to spatial tensors, all sharing
/// one dimension tree. Zero components are never stored.
class SpaceTimeVector {
 public:
  SpaceTimeVector() = default;
  explicit SpaceTimeVector(std::shared_ptr<const DimensionTree> tree) : tree_(std::move(tree)) {}

  const std::shared_ptr<const DimensionTree>& tree_ptr() const { return tree_; }
  const DimensionTree& tree() const { return *tree_; }
  int dims() const { return tree_ ? tree_->dims() : 0; }

  bool empty() const { return slices_.empty(); }
  std::size_t slice_count() const { return slices_.size(); }
  const std::map<int, HTensor>& slices() const { return slices_; }
  std::map<int, HTensor>& slices() { return slices_; }

  const HTensor* slice(int t) const;
  void set_slice(int t, HTensor h);  // drops structurally zero components
  void prune();

  double norm() const;
  int rank_infty() const;
  std::vector<int> temporal_support() const;

  /// Total count of active (mode, slice, index) entries over all dimensions.
  std::size_t support_sum() const;

  SpaceTimeVector& scale(double s);
  static SpaceTimeVector axpy(double a, const SpaceTimeVector& x, const SpaceTimeVector& y);
  static double inner(const SpaceTimeVector& a, const SpaceTimeVector& b);

 private:
  std::shared_ptr<const DimensionTree> tree_;
  std::map<int, HTensor> slices_;
};

/// Per-slice, per-mode contraction values of a vector in HSVD form, plus the
/// slice norms.
struct ContractionTable {
  // entries[(mode, slice)] aligned with ids[(mode, slice)]
  std::map<std::pair<int, int>, std::vector<double>> values;
  std::map<std::pair<int, int>, std::vector<int>> ids;
  std::map<int, double> slice_norms;

  double mode_norm(int mode) const;
};

/// Brings every slice into HSVD form and collects contraction values.
ContractionTable contractions(SpaceTimeVector& v);

struct RecompressReport {
  int rank_infty = 0;
  double tail = 0.0;  // achieved bound on the discarded mass
};

/// Rank reduction with a globally selected rank vector: the minimal common
/// rank cap meeting the total tail budget eta is found first, then individual
/// edge ranks are lowered greedily while the budget allows.
SpaceTimeVector recompress(const SpaceTimeVector& v, double eta, RecompressReport* report = nullptr);

struct CoarsenReport {
  std::size_t retained = 0;  // N
  double mu = 0.0;           // mu_N
};

/// Restriction to per-slice Cartesian products of retained indices, chosen by
/// a global descending sort of all contraction values; keeps the smallest N
/// with the computable error bound mu_N <= eta.
SpaceTimeVector coarsen(const SpaceTimeVector& v, double eta, CoarsenReport* report = nullptr);

/// mu_N sequence for analysis/testing: entry N holds mu_N, N = 0..count.
std::vector<double> coarsening_error_sequence(const SpaceTimeVector& v);

}  // namespace stlr
