#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "stlr/dense_linalg.hpp"
#include "stlr/dimension_tree.hpp"

namespace stlr {

/// Transfer tensor: parent rank x child0 rank x child1 rank, child1 fastest.
struct Tensor3 {
  int n0 = 0, n1 = 0, n2 = 0;
  std::vector<double> a;

  Tensor3() = default;
  Tensor3(int a0, int a1, int a2) : n0(a0), n1(a1), n2(a2), a(static_cast<std::size_t>(a0) * a1 * a2, 0.0) {}
  double& at(int i, int j, int k) { return a[(static_cast<std::size_t>(i) * n1 + j) * n2 + k]; }
  double at(int i, int j, int k) const { return a[(static_cast<std::size_t>(i) * n1 + j) * n2 + k]; }
};

/// Hierarchical tensor over per-mode active index sets (sorted ordinals).
/// Value semantics; mutating operations are private to the provided methods.
class HTensor {
 public:
  HTensor() = default;

  /// All-rank-zero tensor with empty index sets.
  static HTensor zero(std::shared_ptr<const DimensionTree> tree);

  /// Dense bridge for oracle-scale verification. `data` is indexed row-major
  /// with mode 0 slowest, positions within each mode's id list. Throws when
  /// the total size exceeds `cap`.
  static HTensor from_dense(std::shared_ptr<const DimensionTree> tree, std::vector<std::vector<int>> leaf_ids,
                            std::span<const double> data, std::size_t cap = 200000);
  std::vector<double> to_dense(std::size_t cap = 200000) const;

  const DimensionTree& tree() const { return *tree_; }
  const std::shared_ptr<const DimensionTree>& tree_ptr() const { return tree_; }
  int dims() const { return tree_ ? tree_->dims() : 0; }
  bool valid() const { return tree_ != nullptr; }

  const std::vector<int>& leaf_ids(int mode) const { return leaf_ids_[mode]; }
  const Matrix& leaf_frame(int mode) const { return leaf_u_[mode]; }
  int leaf_size(int mode) const { return static_cast<int>(leaf_ids_[mode].size()); }

  const Tensor3& transfer(int node) const { return transfer_[node]; }
  const Matrix& root_matrix() const { return root_b_; }

  /// Builds a tensor from raw parts (no validation beyond shape checks).
  static HTensor assemble(std::shared_ptr<const DimensionTree> tree, std::vector<std::vector<int>> leaf_ids,
                          std::vector<Matrix> leaf_frames, std::vector<Tensor3> transfers, Matrix root);

  /// Representation rank at a node (leaf frame columns / transfer first mode).
  int node_rank(int node) const;
  std::vector<int> representation_ranks() const;  // per edge
  int max_rank() const;
  bool is_structurally_zero() const;

  bool orthonormal() const { return orthonormal_; }
  void orthogonalize();

  /// Rotates to the hierarchical SVD basis; afterwards edge_sigma(e) holds the
  /// matricization singular values and frames are left singular vectors.
  void hsvd();
  bool in_hsvd_form() const { return hsvd_valid_; }
  const std::vector<double>& edge_sigma(int edge) const { return sigma_[edge]; }

  /// Keeps the leading ranks per edge; requires HSVD form (recomputed if
  /// absent). Throws on infeasible rank vectors.
  void truncate(const std::vector<int>& edge_ranks);

  double norm() const;
  double norm_squared() const { const double n = norm(); return n * n; }

  void scale(double s);
  static HTensor add(const HTensor& a, const HTensor& b);

  /// Replaces the mode's frame by (entries * frame); `entry(out, in)` is
  /// evaluated for out in out_ids and in in the current id list. Ranks are
  /// unchanged.
  void apply_leaf_operator(int mode, const std::vector<int>& out_ids,
                           const std::function<double(int, int)>& entry);

  /// Multiplies row i of every leaf frame by diag[mode][i]; diag vectors are
  /// aligned with the current id lists.
  void apply_rank1_diagonal(const std::vector<std::vector<double>>& diag);

  /// Restriction to the Cartesian product of keep sets (sorted ordinals).
  void restrict_modes(const std::vector<std::vector<int>>& keep);

  /// Mode contraction: per active index of the mode, the l2 mass of the
  /// tensor over all other modes. Requires HSVD form.
  std::vector<double> contraction(int mode) const;

  static double inner(const HTensor& a, const HTensor& b);

  /// Rank rounding with certified absolute error: drops trailing singular
  /// values, smallest first across all edges, while the dropped mass stays
  /// within eta^2.
  static HTensor rounded(const HTensor& h, double eta);

 private:
  void invalidate() {
    orthonormal_ = false;
    hsvd_valid_ = false;
    sigma_.clear();
  }
  void compute_gramians(std::vector<Matrix>& gram) const;

  std::shared_ptr<const DimensionTree> tree_;
  std::vector<std::vector<int>> leaf_ids_;
  std::vector<Matrix> leaf_u_;
  std::vector<Tensor3> transfer_;  // indexed by node id; unused for leaves/root
  Matrix root_b_;                  // d>=2: r(c0) x r(c1); d=1: r x 1
  bool orthonormal_ = false;
  bool hsvd_valid_ = false;
  std::vector<std::vector<double>> sigma_;  // per edge
};

}  // namespace stlr
