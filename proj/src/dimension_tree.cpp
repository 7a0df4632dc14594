#include "stlr/dimension_tree.hpp"

#include <stdexcept>

namespace stlr {

std::shared_ptr<const DimensionTree> DimensionTree::linear(int d) {
  if (d < 1) throw std::invalid_argument("DimensionTree: dimension must be positive");
  auto tree = std::make_shared<DimensionTree>();
  tree->d_ = d;
  tree->leaf_of_mode_.assign(d, -1);

  if (d == 1) {
    Node n;
    n.mode = 0;
    n.modes = {0};
    tree->nodes_.push_back(n);
    tree->root_ = 0;
    tree->leaf_of_mode_[0] = 0;
    tree->edge_nodes_ = {0};
    tree->edge_of_node_ = {0};
    tree->postorder_ = {0};
    return tree;
  }

  // interior chain {i..d-1} plus leaves; ids assigned on creation
  auto add_node = [&](Node n) {
    tree->nodes_.push_back(std::move(n));
    return static_cast<int>(tree->nodes_.size()) - 1;
  };
  auto make_leaf = [&](int mode) {
    Node n;
    n.mode = mode;
    n.modes = {mode};
    const int id = add_node(n);
    tree->leaf_of_mode_[mode] = id;
    return id;
  };

  // build bottom-up: {d-1}, then {i..d-1} = ({i}, {i+1..d-1})
  int tail = make_leaf(d - 1);
  for (int i = d - 2; i >= 1; --i) {
    const int leaf = make_leaf(i);
    Node n;
    n.child0 = leaf;
    n.child1 = tail;
    n.modes.push_back(i);
    for (int m : tree->nodes_[tail].modes) n.modes.push_back(m);
    const int id = add_node(n);
    tree->nodes_[leaf].parent = id;
    tree->nodes_[tail].parent = id;
    tail = id;
  }
  const int leaf0 = make_leaf(0);
  Node rootn;
  rootn.child0 = leaf0;
  rootn.child1 = tail;
  rootn.modes.push_back(0);
  for (int m : tree->nodes_[tail].modes) rootn.modes.push_back(m);
  tree->root_ = add_node(rootn);
  tree->nodes_[leaf0].parent = tree->root_;
  tree->nodes_[tail].parent = tree->root_;

  // canonical edge representers: all non-root nodes except the root's second child
  tree->edge_of_node_.assign(tree->nodes_.size(), -1);
  for (int i = 0; i < tree->node_count(); ++i) {
    if (i == tree->root_ || i == tree->nodes_[tree->root_].child1) continue;
    tree->edge_of_node_[i] = static_cast<int>(tree->edge_nodes_.size());
    tree->edge_nodes_.push_back(i);
  }
  tree->edge_of_node_[tree->nodes_[tree->root_].child1] =
      tree->edge_of_node_[tree->nodes_[tree->root_].child0];

  // postorder
  std::vector<int> stack = {tree->root_};
  std::vector<int> order;
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    order.push_back(n);
    if (!tree->is_leaf(n)) {
      stack.push_back(tree->nodes_[n].child0);
      stack.push_back(tree->nodes_[n].child1);
    }
  }
  tree->postorder_.assign(order.rbegin(), order.rend());
  return tree;
}

bool DimensionTree::same_structure(const DimensionTree& other) const {
  if (d_ != other.d_ || nodes_.size() != other.nodes_.size() || root_ != other.root_) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].child0 != other.nodes_[i].child0 || nodes_[i].child1 != other.nodes_[i].child1 ||
        nodes_[i].mode != other.nodes_[i].mode)
      return false;
  }
  return true;
}

}  // namespace stlr
