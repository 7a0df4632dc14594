#include "stlr/htensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stlr {

namespace {

std::size_t total_size(const std::vector<std::vector<int>>& ids) {
  std::size_t n = 1;
  for (const auto& v : ids) n *= v.size();
  return n;
}

// matricization of a dense array (natural row-major layout, mode 0 slowest):
// rows indexed by row_modes in the given order, columns by the complement in
// natural order
Matrix matricize(std::span<const double> data, const std::vector<std::size_t>& sizes,
                 const std::vector<int>& row_modes) {
  const int d = static_cast<int>(sizes.size());
  std::vector<bool> in_row(d, false);
  for (int m : row_modes) in_row[m] = true;
  std::vector<int> col_modes;
  for (int m = 0; m < d; ++m)
    if (!in_row[m]) col_modes.push_back(m);

  std::size_t nrows = 1, ncols = 1;
  for (int m : row_modes) nrows *= sizes[m];
  for (int m : col_modes) ncols *= sizes[m];

  Matrix out(nrows, ncols);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t flat = 0; flat < data.size(); ++flat) {
    std::size_t rem = flat;
    for (int m = d - 1; m >= 0; --m) {
      idx[m] = rem % sizes[m];
      rem /= sizes[m];
    }
    std::size_t r = 0, c = 0;
    for (int m : row_modes) r = r * sizes[m] + idx[m];
    for (int m : col_modes) c = c * sizes[m] + idx[m];
    out(r, c) = data[flat];
  }
  return out;
}

}  // namespace

HTensor HTensor::assemble(std::shared_ptr<const DimensionTree> tree, std::vector<std::vector<int>> leaf_ids,
                          std::vector<Matrix> leaf_frames, std::vector<Tensor3> transfers, Matrix root) {
  HTensor t;
  t.tree_ = std::move(tree);
  t.leaf_ids_ = std::move(leaf_ids);
  t.leaf_u_ = std::move(leaf_frames);
  t.transfer_ = std::move(transfers);
  t.root_b_ = std::move(root);
  return t;
}

HTensor HTensor::zero(std::shared_ptr<const DimensionTree> tree) {
  HTensor t;
  t.tree_ = std::move(tree);
  const int d = t.tree_->dims();
  t.leaf_ids_.resize(d);
  t.leaf_u_.assign(d, Matrix());
  t.transfer_.assign(t.tree_->node_count(), Tensor3());
  t.root_b_ = Matrix();
  t.orthonormal_ = true;
  t.hsvd_valid_ = true;
  t.sigma_.assign(t.tree_->edge_count(), {});
  return t;
}

bool HTensor::is_structurally_zero() const {
  if (!tree_) return true;
  for (int m = 0; m < dims(); ++m)
    if (leaf_ids_[m].empty() || leaf_u_[m].cols() == 0) return true;
  if (root_b_.rows() == 0 || root_b_.cols() == 0) return true;
  return false;
}

int HTensor::node_rank(int node) const {
  if (tree_->is_leaf(node)) return static_cast<int>(leaf_u_[tree_->node(node).mode].cols());
  return transfer_[node].n0;
}

std::vector<int> HTensor::representation_ranks() const {
  std::vector<int> r;
  for (int n : tree_->edge_nodes()) r.push_back(node_rank(n));
  return r;
}

int HTensor::max_rank() const {
  int r = 0;
  for (int v : representation_ranks()) r = std::max(r, v);
  return r;
}

HTensor HTensor::from_dense(std::shared_ptr<const DimensionTree> tree, std::vector<std::vector<int>> leaf_ids,
                            std::span<const double> data, std::size_t cap) {
  const int d = tree->dims();
  if (static_cast<int>(leaf_ids.size()) != d) throw std::invalid_argument("from_dense: id list count mismatch");
  std::vector<std::size_t> sizes(d);
  for (int m = 0; m < d; ++m) sizes[m] = leaf_ids[m].size();
  if (total_size(leaf_ids) != data.size()) throw std::invalid_argument("from_dense: data size mismatch");
  if (data.size() > cap) throw std::invalid_argument("from_dense: size cap exceeded");

  double amax = 0.0;
  for (double v : data) amax = std::max(amax, std::abs(v));
  if (amax == 0.0) {
    HTensor z = zero(tree);
    z.leaf_ids_ = std::move(leaf_ids);
    for (int m = 0; m < d; ++m) z.leaf_u_[m] = Matrix(sizes[m], 0);
    return z;
  }

  HTensor t;
  t.tree_ = tree;
  t.leaf_ids_ = std::move(leaf_ids);
  t.leaf_u_.resize(d);
  t.transfer_.assign(tree->node_count(), Tensor3());

  if (d == 1) {
    t.leaf_u_[0] = Matrix(sizes[0], 1);
    t.root_b_ = Matrix(1, 1);
    double nrm = 0.0;
    for (double v : data) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < sizes[0]; ++i) t.leaf_u_[0](i, 0) = data[i] / nrm;
    t.root_b_(0, 0) = nrm;
    t.orthonormal_ = true;
    return t;
  }

  std::vector<Matrix> frames(tree->node_count());
  for (int n = 0; n < tree->node_count(); ++n) {
    if (n == tree->root()) continue;
    Matrix mat = matricize(data, sizes, tree->node(n).modes);
    SvdResult svd = jacobi_svd(mat, 1e-14);
    frames[n] = svd.u;
    if (tree->is_leaf(n)) t.leaf_u_[tree->node(n).mode] = svd.u;
  }
  // transfers: project each frame onto the kron of the children frames
  for (int n : tree->postorder()) {
    if (tree->is_leaf(n) || n == tree->root()) continue;
    const auto& nd = tree->node(n);
    const Matrix& u0 = frames[nd.child0];
    const Matrix& u1 = frames[nd.child1];
    const Matrix& up = frames[n];
    Tensor3 b(static_cast<int>(up.cols()), static_cast<int>(u0.cols()), static_cast<int>(u1.cols()));
    for (int k = 0; k < b.n0; ++k)
      for (int l1 = 0; l1 < b.n1; ++l1)
        for (int l2 = 0; l2 < b.n2; ++l2) {
          double s = 0.0;
          for (std::size_t i0 = 0; i0 < u0.rows(); ++i0)
            for (std::size_t i1 = 0; i1 < u1.rows(); ++i1)
              s += up(i0 * u1.rows() + i1, k) * u0(i0, l1) * u1(i1, l2);
          b.at(k, l1, l2) = s;
        }
    t.transfer_[n] = std::move(b);
  }
  {
    const auto& rn = tree->node(tree->root());
    Matrix mat0 = matricize(data, sizes, tree->node(rn.child0).modes);  // rows c0, cols c1 (natural order)
    const Matrix& u0 = frames[rn.child0];
    const Matrix& u1 = frames[rn.child1];
    t.root_b_ = matmul(matmul_at_b(u0, mat0), u1);
  }
  t.orthonormal_ = true;
  return t;
}

std::vector<double> HTensor::to_dense(std::size_t cap) const {
  if (!tree_) throw std::invalid_argument("to_dense: empty tensor");
  const int d = dims();
  std::vector<std::size_t> sizes(d);
  for (int m = 0; m < d; ++m) sizes[m] = leaf_ids_[m].size();
  const std::size_t n = total_size(leaf_ids_);
  if (n > cap) throw std::invalid_argument("to_dense: size cap exceeded");
  std::vector<double> out(n, 0.0);
  if (is_structurally_zero()) return out;

  if (d == 1) {
    for (std::size_t i = 0; i < sizes[0]; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < leaf_u_[0].cols(); ++k) s += leaf_u_[0](i, k) * root_b_(k, 0);
      out[i] = s;
    }
    return out;
  }

  // dense frames per node, rows in node-mode order (child0 block major)
  std::vector<Matrix> dense(tree_->node_count());
  for (int n2 : tree_->postorder()) {
    if (n2 == tree_->root()) continue;
    if (tree_->is_leaf(n2)) {
      dense[n2] = leaf_u_[tree_->node(n2).mode];
      continue;
    }
    const auto& nd = tree_->node(n2);
    const Matrix& u0 = dense[nd.child0];
    const Matrix& u1 = dense[nd.child1];
    const Tensor3& b = transfer_[n2];
    Matrix u(u0.rows() * u1.rows(), b.n0);
    for (int k = 0; k < b.n0; ++k)
      for (int l1 = 0; l1 < b.n1; ++l1)
        for (int l2 = 0; l2 < b.n2; ++l2) {
          const double w = b.at(k, l1, l2);
          if (w == 0.0) continue;
          for (std::size_t i0 = 0; i0 < u0.rows(); ++i0)
            for (std::size_t i1 = 0; i1 < u1.rows(); ++i1)
              u(i0 * u1.rows() + i1, k) += w * u0(i0, l1) * u1(i1, l2);
        }
    dense[n2] = std::move(u);
  }
  const auto& rn = tree_->node(tree_->root());
  const Matrix& u0 = dense[rn.child0];
  const Matrix& u1 = dense[rn.child1];
  std::vector<double> flat(n, 0.0);
  for (std::size_t l1 = 0; l1 < root_b_.rows(); ++l1)
    for (std::size_t l2 = 0; l2 < root_b_.cols(); ++l2) {
      const double w = root_b_(l1, l2);
      if (w == 0.0) continue;
      for (std::size_t i0 = 0; i0 < u0.rows(); ++i0)
        for (std::size_t i1 = 0; i1 < u1.rows(); ++i1) flat[i0 * u1.rows() + i1] += w * u0(i0, l1) * u1(i1, l2);
    }
  // reorder from root-node mode order to natural order
  const std::vector<int>& rmodes = tree_->node(tree_->root()).modes;
  bool natural = true;
  for (int m = 0; m < d; ++m)
    if (rmodes[m] != m) natural = false;
  if (natural) return flat;
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t f = 0; f < n; ++f) {
    std::size_t rem = f;
    for (int m = d - 1; m >= 0; --m) {
      idx[rmodes[m]] = rem % sizes[rmodes[m]];
      rem /= sizes[rmodes[m]];
    }
    std::size_t nat = 0;
    for (int m = 0; m < d; ++m) nat = nat * sizes[m] + idx[m];
    out[nat] = flat[f];
  }
  return out;
}

void HTensor::orthogonalize() {
  if (!tree_) throw std::invalid_argument("orthogonalize: empty tensor");
  if (orthonormal_) return;
  if (is_structurally_zero()) {
    *this = zero(tree_);
    return;
  }
  const int d = dims();
  if (d == 1) {
    Matrix q, r;
    thin_qr(leaf_u_[0], q, r);
    leaf_u_[0] = std::move(q);
    root_b_ = matmul(r, root_b_);
    orthonormal_ = true;
    hsvd_valid_ = false;
    sigma_.clear();
    return;
  }

  std::vector<Matrix> pending(tree_->node_count());
  for (int n : tree_->postorder()) {
    if (n == tree_->root()) continue;
    if (tree_->is_leaf(n)) {
      Matrix q, r;
      thin_qr(leaf_u_[tree_->node(n).mode], q, r);
      leaf_u_[tree_->node(n).mode] = std::move(q);
      pending[n] = std::move(r);
      continue;
    }
    const auto& nd = tree_->node(n);
    Tensor3& b = transfer_[n];
    const Matrix& r0 = pending[nd.child0];
    const Matrix& r1 = pending[nd.child1];
    Tensor3 b2(b.n0, static_cast<int>(r0.rows()), static_cast<int>(r1.rows()));
    for (int k = 0; k < b.n0; ++k)
      for (std::size_t l1 = 0; l1 < r0.rows(); ++l1)
        for (std::size_t l2 = 0; l2 < r1.rows(); ++l2) {
          double s = 0.0;
          for (int m1 = 0; m1 < b.n1; ++m1) {
            if (r0(l1, m1) == 0.0) continue;
            for (int m2 = 0; m2 < b.n2; ++m2) s += r0(l1, m1) * b.at(k, m1, m2) * r1(l2, m2);
          }
          b2.at(k, static_cast<int>(l1), static_cast<int>(l2)) = s;
        }
    // orthonormalize the (l1,l2) -> k map
    Matrix m(static_cast<std::size_t>(b2.n1) * b2.n2, b2.n0);
    for (int k = 0; k < b2.n0; ++k)
      for (int l1 = 0; l1 < b2.n1; ++l1)
        for (int l2 = 0; l2 < b2.n2; ++l2) m(static_cast<std::size_t>(l1) * b2.n2 + l2, k) = b2.at(k, l1, l2);
    Matrix q, r;
    thin_qr(m, q, r);
    Tensor3 bq(static_cast<int>(q.cols()), b2.n1, b2.n2);
    for (std::size_t k = 0; k < q.cols(); ++k)
      for (int l1 = 0; l1 < b2.n1; ++l1)
        for (int l2 = 0; l2 < b2.n2; ++l2)
          bq.at(static_cast<int>(k), l1, l2) = q(static_cast<std::size_t>(l1) * b2.n2 + l2, k);
    transfer_[n] = std::move(bq);
    pending[n] = std::move(r);
  }
  const auto& rn = tree_->node(tree_->root());
  root_b_ = matmul(pending[rn.child0], matmul(root_b_, pending[rn.child1].transposed()));
  orthonormal_ = true;
  hsvd_valid_ = false;
  sigma_.clear();
}

void HTensor::compute_gramians(std::vector<Matrix>& gram) const {
  gram.assign(tree_->node_count(), Matrix());
  const auto& rn = tree_->node(tree_->root());
  gram[rn.child0] = matmul(root_b_, root_b_.transposed());
  gram[rn.child1] = matmul_at_b(root_b_, root_b_);
  const auto& order = tree_->postorder();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int n = *it;
    if (n == tree_->root() || tree_->is_leaf(n)) continue;
    const Tensor3& b = transfer_[n];
    const Matrix& g = gram[n];
    Matrix g0(b.n1, b.n1), g1(b.n2, b.n2);
    for (int k = 0; k < b.n0; ++k)
      for (int kp = 0; kp < b.n0; ++kp) {
        const double gkk = g(k, kp);
        if (gkk == 0.0) continue;
        for (int l1 = 0; l1 < b.n1; ++l1)
          for (int l1p = 0; l1p < b.n1; ++l1p) {
            double s = 0.0;
            for (int l2 = 0; l2 < b.n2; ++l2) s += b.at(k, l1, l2) * b.at(kp, l1p, l2);
            g0(l1, l1p) += gkk * s;
          }
        for (int l2 = 0; l2 < b.n2; ++l2)
          for (int l2p = 0; l2p < b.n2; ++l2p) {
            double s = 0.0;
            for (int l1 = 0; l1 < b.n1; ++l1) s += b.at(k, l1, l2) * b.at(kp, l1, l2p);
            g1(l2, l2p) += gkk * s;
          }
      }
    gram[tree_->node(n).child0] = std::move(g0);
    gram[tree_->node(n).child1] = std::move(g1);
  }
}

void HTensor::hsvd() {
  if (!tree_) throw std::invalid_argument("hsvd: empty tensor");
  if (hsvd_valid_) return;
  orthogonalize();
  sigma_.assign(tree_->edge_count(), {});
  if (is_structurally_zero()) {
    hsvd_valid_ = true;
    return;
  }
  const int d = dims();
  if (d == 1) {
    // root weights collapse to a single direction
    const std::size_t r = root_b_.rows();
    double nrm = 0.0;
    for (std::size_t k = 0; k < r; ++k) nrm += root_b_(k, 0) * root_b_(k, 0);
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) {
      *this = zero(tree_);
      hsvd_valid_ = true;
      return;
    }
    Matrix u(leaf_u_[0].rows(), 1);
    for (std::size_t i = 0; i < u.rows(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += leaf_u_[0](i, k) * root_b_(k, 0);
      u(i, 0) = s / nrm;
    }
    leaf_u_[0] = std::move(u);
    root_b_ = Matrix(1, 1);
    root_b_(0, 0) = nrm;
    sigma_[0] = {nrm};
    hsvd_valid_ = true;
    return;
  }

  std::vector<Matrix> gram;
  compute_gramians(gram);

  // eigenbasis and numerical-rank cut per node
  std::vector<Matrix> rot(tree_->node_count());
  std::vector<std::vector<double>> sig(tree_->node_count());
  for (int n = 0; n < tree_->node_count(); ++n) {
    if (n == tree_->root()) continue;
    EigResult e = sym_eig(gram[n]);
    const double lmax = e.lambda.empty() ? 0.0 : std::max(e.lambda[0], 0.0);
    const double cut = 1e-28 * lmax;  // sigma <= 1e-14 * sigma_max
    int keep = 0;
    while (keep < static_cast<int>(e.lambda.size()) && e.lambda[keep] > cut && e.lambda[keep] > 0.0) ++keep;
    rot[n] = e.q.cols_slice(0, keep);
    sig[n].resize(keep);
    for (int k = 0; k < keep; ++k) sig[n][k] = std::sqrt(std::max(e.lambda[k], 0.0));
  }
  // the two root children share the same spectrum; force a common rank
  {
    const auto& rn = tree_->node(tree_->root());
    const int keep = std::min(rot[rn.child0].cols(), rot[rn.child1].cols());
    rot[rn.child0] = rot[rn.child0].cols_slice(0, keep);
    rot[rn.child1] = rot[rn.child1].cols_slice(0, keep);
    sig[rn.child0].resize(keep);
    sig[rn.child1].resize(keep);
  }
  if ([&] {
        for (int n = 0; n < tree_->node_count(); ++n)
          if (n != tree_->root() && rot[n].cols() == 0) return true;
        return false;
      }()) {
    *this = zero(tree_);
    hsvd_valid_ = true;
    return;
  }

  for (int n = 0; n < tree_->node_count(); ++n) {
    if (n == tree_->root()) continue;
    if (tree_->is_leaf(n)) {
      leaf_u_[tree_->node(n).mode] = matmul(leaf_u_[tree_->node(n).mode], rot[n]);
    } else {
      const Tensor3& b = transfer_[n];
      const Matrix& q = rot[n];
      Tensor3 b2(static_cast<int>(q.cols()), b.n1, b.n2);
      for (std::size_t kp = 0; kp < q.cols(); ++kp)
        for (int l1 = 0; l1 < b.n1; ++l1)
          for (int l2 = 0; l2 < b.n2; ++l2) {
            double s = 0.0;
            for (int k = 0; k < b.n0; ++k) s += q(k, kp) * b.at(k, l1, l2);
            b2.at(static_cast<int>(kp), l1, l2) = s;
          }
      transfer_[n] = std::move(b2);
    }
  }
  // rotate the child slots of every interior node and the root matrix
  for (int n = 0; n < tree_->node_count(); ++n) {
    if (tree_->is_leaf(n)) continue;
    const auto& nd = tree_->node(n);
    const Matrix& q0 = rot[nd.child0];
    const Matrix& q1 = rot[nd.child1];
    if (n == tree_->root()) {
      root_b_ = matmul(matmul_at_b(q0, root_b_), q1);
      continue;
    }
    const Tensor3& b = transfer_[n];
    Tensor3 b2(b.n0, static_cast<int>(q0.cols()), static_cast<int>(q1.cols()));
    for (int k = 0; k < b.n0; ++k)
      for (std::size_t l1p = 0; l1p < q0.cols(); ++l1p)
        for (std::size_t l2p = 0; l2p < q1.cols(); ++l2p) {
          double s = 0.0;
          for (int l1 = 0; l1 < b.n1; ++l1) {
            if (q0(l1, l1p) == 0.0) continue;
            for (int l2 = 0; l2 < b.n2; ++l2) s += q0(l1, l1p) * b.at(k, l1, l2) * q1(l2, l2p);
          }
          b2.at(k, static_cast<int>(l1p), static_cast<int>(l2p)) = s;
        }
    transfer_[n] = std::move(b2);
  }
  for (int e = 0; e < tree_->edge_count(); ++e) sigma_[e] = sig[tree_->edge_nodes()[e]];
  hsvd_valid_ = true;
}

void HTensor::truncate(const std::vector<int>& edge_ranks) {
  if (static_cast<int>(edge_ranks.size()) != tree_->edge_count())
    throw std::invalid_argument("truncate: rank vector size mismatch");
  for (int r : edge_ranks)
    if (r < 0) throw std::invalid_argument("truncate: negative rank");
  // feasibility: interior nodes cannot exceed the product of their children
  for (int n = 0; n < tree_->node_count(); ++n) {
    if (tree_->is_leaf(n) || n == tree_->root()) continue;
    const auto& nd = tree_->node(n);
    const long own = edge_ranks[tree_->edge_of_node(n)];
    const long c0 = edge_ranks[tree_->edge_of_node(nd.child0)];
    const long c1 = edge_ranks[tree_->edge_of_node(nd.child1)];
    if (own > c0 * c1) throw std::invalid_argument("truncate: infeasible rank vector");
  }
  if (!hsvd_valid_) hsvd();
  if (is_structurally_zero()) return;

  std::vector<int> keep(tree_->node_count(), 0);
  bool zero_out = false;
  for (int n = 0; n < tree_->node_count(); ++n) {
    if (n == tree_->root()) continue;
    keep[n] = std::min(node_rank(n), edge_ranks[tree_->edge_of_node(n)]);
    if (keep[n] == 0) zero_out = true;
  }
  if (zero_out) {
    auto ids = leaf_ids_;
    *this = zero(tree_);
    leaf_ids_ = std::move(ids);
    for (int m = 0; m < dims(); ++m) leaf_u_[m] = Matrix(leaf_ids_[m].size(), 0);
    return;
  }
  if (dims() == 1) return;  // d=1 holds a single direction after hsvd

  for (int n = 0; n < tree_->node_count(); ++n) {
    if (n == tree_->root()) {
      const auto& nd = tree_->node(n);
      Matrix nb(keep[nd.child0], keep[nd.child1]);
      for (std::size_t i = 0; i < nb.rows(); ++i)
        for (std::size_t j = 0; j < nb.cols(); ++j) nb(i, j) = root_b_(i, j);
      root_b_ = std::move(nb);
      continue;
    }
    if (tree_->is_leaf(n)) {
      leaf_u_[tree_->node(n).mode] = leaf_u_[tree_->node(n).mode].cols_slice(0, keep[n]);
    } else {
      const auto& nd = tree_->node(n);
      const Tensor3& b = transfer_[n];
      Tensor3 b2(keep[n], keep[nd.child0], keep[nd.child1]);
      for (int k = 0; k < b2.n0; ++k)
        for (int l1 = 0; l1 < b2.n1; ++l1)
          for (int l2 = 0; l2 < b2.n2; ++l2) b2.at(k, l1, l2) = b.at(k, l1, l2);
      transfer_[n] = std::move(b2);
    }
  }
  for (int e = 0; e < tree_->edge_count(); ++e)
    sigma_[e].resize(std::min<std::size_t>(sigma_[e].size(), keep[tree_->edge_nodes()[e]]));
}

double HTensor::norm() const {
  if (!tree_ || is_structurally_zero()) return 0.0;
  if (orthonormal_) return root_b_.frobenius();
  HTensor copy = *this;
  copy.orthogonalize();
  return copy.is_structurally_zero() ? 0.0 : copy.root_b_.frobenius();
}

void HTensor::scale(double s) {
  for (std::size_t i = 0; i < root_b_.rows(); ++i)
    for (std::size_t j = 0; j < root_b_.cols(); ++j) root_b_(i, j) *= s;
  hsvd_valid_ = false;
  sigma_.clear();
}

HTensor HTensor::add(const HTensor& a, const HTensor& b) {
  if (!a.valid()) return b;
  if (!b.valid()) return a;
  if (!a.tree_->same_structure(*b.tree_)) throw std::invalid_argument("add: dimension tree mismatch");
  if (a.is_structurally_zero()) return b;
  if (b.is_structurally_zero()) return a;
  const int d = a.dims();

  HTensor out;
  out.tree_ = a.tree_;
  out.leaf_ids_.resize(d);
  out.leaf_u_.resize(d);
  out.transfer_.assign(a.tree_->node_count(), Tensor3());

  for (int m = 0; m < d; ++m) {
    std::vector<int> ids;
    std::merge(a.leaf_ids_[m].begin(), a.leaf_ids_[m].end(), b.leaf_ids_[m].begin(), b.leaf_ids_[m].end(),
               std::back_inserter(ids));
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const std::size_t ra = a.leaf_u_[m].cols(), rb = b.leaf_u_[m].cols();
    Matrix u(ids.size(), ra + rb);
    for (std::size_t src = 0, i = 0; i < ids.size(); ++i) {
      (void)src;
      auto it = std::lower_bound(a.leaf_ids_[m].begin(), a.leaf_ids_[m].end(), ids[i]);
      if (it != a.leaf_ids_[m].end() && *it == ids[i]) {
        const std::size_t row = it - a.leaf_ids_[m].begin();
        for (std::size_t k = 0; k < ra; ++k) u(i, k) = a.leaf_u_[m](row, k);
      }
      auto jt = std::lower_bound(b.leaf_ids_[m].begin(), b.leaf_ids_[m].end(), ids[i]);
      if (jt != b.leaf_ids_[m].end() && *jt == ids[i]) {
        const std::size_t row = jt - b.leaf_ids_[m].begin();
        for (std::size_t k = 0; k < rb; ++k) u(i, ra + k) = b.leaf_u_[m](row, k);
      }
    }
    out.leaf_ids_[m] = std::move(ids);
    out.leaf_u_[m] = std::move(u);
  }

  if (d == 1) {
    out.root_b_ = Matrix(a.root_b_.rows() + b.root_b_.rows(), 1);
    for (std::size_t i = 0; i < a.root_b_.rows(); ++i) out.root_b_(i, 0) = a.root_b_(i, 0);
    for (std::size_t i = 0; i < b.root_b_.rows(); ++i) out.root_b_(a.root_b_.rows() + i, 0) = b.root_b_(i, 0);
    return out;
  }

  for (int n = 0; n < a.tree_->node_count(); ++n) {
    if (a.tree_->is_leaf(n) || n == a.tree_->root()) continue;
    const Tensor3& ta = a.transfer_[n];
    const Tensor3& tb = b.transfer_[n];
    Tensor3 t(ta.n0 + tb.n0, ta.n1 + tb.n1, ta.n2 + tb.n2);
    for (int k = 0; k < ta.n0; ++k)
      for (int l1 = 0; l1 < ta.n1; ++l1)
        for (int l2 = 0; l2 < ta.n2; ++l2) t.at(k, l1, l2) = ta.at(k, l1, l2);
    for (int k = 0; k < tb.n0; ++k)
      for (int l1 = 0; l1 < tb.n1; ++l1)
        for (int l2 = 0; l2 < tb.n2; ++l2) t.at(ta.n0 + k, ta.n1 + l1, ta.n2 + l2) = tb.at(k, l1, l2);
    out.transfer_[n] = std::move(t);
  }
  out.root_b_ = Matrix(a.root_b_.rows() + b.root_b_.rows(), a.root_b_.cols() + b.root_b_.cols());
  for (std::size_t i = 0; i < a.root_b_.rows(); ++i)
    for (std::size_t j = 0; j < a.root_b_.cols(); ++j) out.root_b_(i, j) = a.root_b_(i, j);
  for (std::size_t i = 0; i < b.root_b_.rows(); ++i)
    for (std::size_t j = 0; j < b.root_b_.cols(); ++j)
      out.root_b_(a.root_b_.rows() + i, a.root_b_.cols() + j) = b.root_b_(i, j);
  return out;
}

void HTensor::apply_leaf_operator(int mode, const std::vector<int>& out_ids,
                                  const std::function<double(int, int)>& entry) {
  const Matrix& u = leaf_u_[mode];
  Matrix nu(out_ids.size(), u.cols());
  for (std::size_t o = 0; o < out_ids.size(); ++o)
    for (std::size_t i = 0; i < leaf_ids_[mode].size(); ++i) {
      const double e = entry(out_ids[o], leaf_ids_[mode][i]);
      if (e == 0.0) continue;
      for (std::size_t k = 0; k < u.cols(); ++k) nu(o, k) += e * u(i, k);
    }
  leaf_ids_[mode] = out_ids;
  leaf_u_[mode] = std::move(nu);
  invalidate();
}

void HTensor::apply_rank1_diagonal(const std::vector<std::vector<double>>& diag) {
  for (int m = 0; m < dims(); ++m) {
    if (diag[m].size() != leaf_ids_[m].size())
      throw std::invalid_argument("apply_rank1_diagonal: diagonal length mismatch");
    for (std::size_t i = 0; i < leaf_u_[m].rows(); ++i)
      for (std::size_t k = 0; k < leaf_u_[m].cols(); ++k) leaf_u_[m](i, k) *= diag[m][i];
  }
  invalidate();
}

void HTensor::restrict_modes(const std::vector<std::vector<int>>& keep) {
  for (int m = 0; m < dims(); ++m) {
    std::vector<int> ids;
    std::vector<std::size_t> rows;
    std::size_t i = 0;
    for (int id : keep[m]) {
      while (i < leaf_ids_[m].size() && leaf_ids_[m][i] < id) ++i;
      if (i < leaf_ids_[m].size() && leaf_ids_[m][i] == id) {
        ids.push_back(id);
        rows.push_back(i);
      }
    }
    Matrix nu(ids.size(), leaf_u_[m].cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t k = 0; k < leaf_u_[m].cols(); ++k) nu(r, k) = leaf_u_[m](rows[r], k);
    leaf_ids_[m] = std::move(ids);
    leaf_u_[m] = std::move(nu);
  }
  invalidate();
}

std::vector<double> HTensor::contraction(int mode) const {
  if (!hsvd_valid_) throw std::logic_error("contraction: tensor not in HSVD form");
  std::vector<double> pi(leaf_ids_[mode].size(), 0.0);
  if (is_structurally_zero()) return pi;
  if (dims() == 1) {
    for (std::size_t i = 0; i < pi.size(); ++i) pi[i] = std::abs(leaf_u_[0](i, 0) * root_b_(0, 0));
    return pi;
  }
  const int leaf = tree_->leaf_node(mode);
  const auto& sig = sigma_[tree_->edge_of_node(leaf)];
  const Matrix& u = leaf_u_[mode];
  for (std::size_t i = 0; i < pi.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < u.cols() && k < sig.size(); ++k) s += u(i, k) * u(i, k) * sig[k] * sig[k];
    pi[i] = std::sqrt(s);
  }
  return pi;
}

HTensor HTensor::rounded(const HTensor& h, double eta) {
  HTensor out = h;
  out.hsvd();
  if (out.is_structurally_zero() || eta <= 0.0) return out;
  struct Item {
    double mass;
    int edge;
    int k;
  };
  std::vector<Item> items;
  for (int e = 0; e < out.tree().edge_count(); ++e) {
    const auto& sig = out.edge_sigma(e);
    for (std::size_t k = 0; k < sig.size(); ++k) items.push_back({sig[k] * sig[k], e, static_cast<int>(k)});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.mass != b.mass) return a.mass < b.mass;
    if (a.edge != b.edge) return a.edge < b.edge;
    return a.k > b.k;
  });
  std::vector<int> keep;
  for (int e = 0; e < out.tree().edge_count(); ++e) keep.push_back(static_cast<int>(out.edge_sigma(e).size()));
  double used = 0.0;
  const double budget = eta * eta;
  for (const Item& it : items) {
    if (it.k != keep[it.edge] - 1) continue;
    if (used + it.mass > budget) continue;
    used += it.mass;
    --keep[it.edge];
  }
  out.truncate(keep);
  return out;
}

double HTensor::inner(const HTensor& a, const HTensor& b) {
  if (!a.valid() || !b.valid()) return 0.0;
  if (!a.tree_->same_structure(*b.tree_)) throw std::invalid_argument("inner: dimension tree mismatch");
  if (a.is_structurally_zero() || b.is_structurally_zero()) return 0.0;
  const int d = a.dims();

  auto leaf_cross = [&](int mode) {
    const auto& ia = a.leaf_ids_[mode];
    const auto& ib = b.leaf_ids_[mode];
    Matrix c(a.leaf_u_[mode].cols(), b.leaf_u_[mode].cols());
    std::size_t i = 0, j = 0;
    while (i < ia.size() && j < ib.size()) {
      if (ia[i] < ib[j]) {
        ++i;
      } else if (ib[j] < ia[i]) {
        ++j;
      } else {
        for (std::size_t k = 0; k < c.rows(); ++k)
          for (std::size_t l = 0; l < c.cols(); ++l) c(k, l) += a.leaf_u_[mode](i, k) * b.leaf_u_[mode](j, l);
        ++i;
        ++j;
      }
    }
    return c;
  };

  if (d == 1) {
    const Matrix c = leaf_cross(0);
    double s = 0.0;
    for (std::size_t k = 0; k < c.rows(); ++k)
      for (std::size_t l = 0; l < c.cols(); ++l) s += a.root_b_(k, 0) * c(k, l) * b.root_b_(l, 0);
    return s;
  }

  std::vector<Matrix> cross(a.tree_->node_count());
  for (int n : a.tree_->postorder()) {
    if (n == a.tree_->root()) continue;
    if (a.tree_->is_leaf(n)) {
      cross[n] = leaf_cross(a.tree_->node(n).mode);
      continue;
    }
    const auto& nd = a.tree_->node(n);
    const Tensor3& ta = a.transfer_[n];
    const Tensor3& tb = b.transfer_[n];
    const Matrix& c0 = cross[nd.child0];
    const Matrix& c1 = cross[nd.child1];
    Matrix c(ta.n0, tb.n0);
    // y(k, l1p, l2p) = sum_{l1,l2} ta(k,l1,l2) c0(l1,l1p) c1(l2,l2p)
    for (int k = 0; k < ta.n0; ++k) {
      Matrix y(c0.cols(), c1.cols());
      for (int l1 = 0; l1 < ta.n1; ++l1)
        for (std::size_t l1p = 0; l1p < c0.cols(); ++l1p) {
          const double w0 = c0(l1, l1p);
          if (w0 == 0.0) continue;
          for (int l2 = 0; l2 < ta.n2; ++l2) {
            const double t = ta.at(k, l1, l2) * w0;
            if (t == 0.0) continue;
            for (std::size_t l2p = 0; l2p < c1.cols(); ++l2p) y(l1p, l2p) += t * c1(l2, l2p);
          }
        }
      for (int kp = 0; kp < tb.n0; ++kp) {
        double s = 0.0;
        for (std::size_t l1p = 0; l1p < y.rows(); ++l1p)
          for (std::size_t l2p = 0; l2p < y.cols(); ++l2p) s += y(l1p, l2p) * tb.at(kp, (int)l1p, (int)l2p);
        c(k, kp) = s;
      }
    }
    cross[n] = std::move(c);
  }
  const auto& rn = a.tree_->node(a.tree_->root());
  const Matrix& c0 = cross[rn.child0];
  const Matrix& c1 = cross[rn.child1];
  double s = 0.0;
  for (std::size_t l1 = 0; l1 < a.root_b_.rows(); ++l1)
    for (std::size_t l2 = 0; l2 < a.root_b_.cols(); ++l2) {
      const double w = a.root_b_(l1, l2);
      if (w == 0.0) continue;
      for (std::size_t l1p = 0; l1p < b.root_b_.rows(); ++l1p)
        for (std::size_t l2p = 0; l2p < b.root_b_.cols(); ++l2p)
          s += w * c0(l1, l1p) * c1(l2, l2p) * b.root_b_(l1p, l2p);
    }
  return s;
}

}  // namespace stlr
