#pragma once

#include <cmath>
#include <memory>
#include <vector>

namespace stlr {

/// Binary dimension tree over modes 0..d-1. Only the linear tree is built
/// here, but all tensor algorithms below are generic over the structure.
///
/// Effective edges are identified with canonical nodes: every non-root node
/// represents the edge to its complement, except that the root's second child
/// shares its edge with the first child and is excluded from the edge list.
/// This yields 2d-3 edges for d >= 3 and a single edge for d <= 2.
class DimensionTree {
 public:
  struct Node {
    int parent = -1;
    int child0 = -1, child1 = -1;
    int mode = -1;  // >= 0 for leaves
    std::vector<int> modes;
  };

  static std::shared_ptr<const DimensionTree> linear(int d);

  int dims() const { return d_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int i) const { return nodes_[i]; }
  int root() const { return root_; }
  bool is_leaf(int i) const { return nodes_[i].child0 < 0; }
  int leaf_node(int mode) const { return leaf_of_mode_[mode]; }

  const std::vector<int>& edge_nodes() const { return edge_nodes_; }
  int edge_count() const { return static_cast<int>(edge_nodes_.size()); }
  int edge_of_node(int node) const { return edge_of_node_[node]; }

  /// Nodes in children-before-parents order, root last.
  const std::vector<int>& postorder() const { return postorder_; }

  bool same_structure(const DimensionTree& other) const;

  static double kappa_p(int d) { return d <= 2 ? 1.0 : std::sqrt(2.0 * d - 3.0); }
  static double kappa_c(int d) { return std::sqrt(static_cast<double>(d)); }

 private:
  int d_ = 0;
  int root_ = -1;
  std::vector<Node> nodes_;
  std::vector<int> leaf_of_mode_;
  std::vector<int> edge_nodes_;
  std::vector<int> edge_of_node_;
  std::vector<int> postorder_;
};

}  // namespace stlr
