#pragma once

#include <span>
#include <vector>

#include "stlr/operators.hpp"

namespace stlr {

/// Flat indexing of a level-capped section: temporal ordinal major, then the
/// spatial multi-index row-major. Sizes are capped to keep everything dense.
class FiniteSection {
 public:
  FiniteSection(const OperatorContext& ctx, int temporal_cap, int spatial_cap, std::size_t cap = 200000);

  int nt() const { return nt_; }
  int nx() const { return nx_; }
  int dims() const { return d_; }
  std::size_t size_x() const { return size_x_; }
  std::size_t size() const { return static_cast<std::size_t>(nt_) * size_x_; }

  std::vector<double> to_dense(const SpaceTimeVector& v) const;
  std::vector<double> to_dense_spatial(const HTensor& h) const;
  SpaceTimeVector from_dense(std::span<const double> data, const OperatorContext& ctx) const;
  HTensor from_dense_spatial(std::span<const double> data, const OperatorContext& ctx) const;

 private:
  int d_, nt_, nx_;
  std::size_t size_x_;
};

/// Entrywise-exact reference operators on a finite section, computed by
/// direct dense contractions; used only by tests and validation commands.
class DenseOracle {
 public:
  enum class Scaling { Converged, Exact };

  DenseOracle(const OperatorContext& ctx, FiniteSection section, Scaling scaling = Scaling::Converged);

  const FiniteSection& section() const { return sec_; }

  std::vector<double> apply_b1(std::span<const double> v) const;
  std::vector<double> apply_b1_transpose(std::span<const double> v) const;
  /// spatial / temporal parts of B1 separately
  std::vector<double> apply_bx(std::span<const double> v) const;
  std::vector<double> apply_bt(std::span<const double> v) const;
  std::vector<double> apply_b2(std::span<const double> v) const;
  std::vector<double> apply_b2_transpose(std::span<const double> w) const;
  std::vector<double> apply_normal(std::span<const double> v) const;

  std::vector<double> rhs_vector(const RhsData& data) const;

  /// Conjugate gradients on the normal operator; relative residual target.
  std::vector<double> solve_normal(std::span<const double> rhs, double rel_tol, int max_iter) const;

  double lambda_max(int iters = 300) const;
  double lambda_min(int iters = 60, double cg_tol = 1e-10) const;

 private:
  const OperatorContext& ctx_;
  FiniteSection sec_;
  std::vector<double> dx_, dy_;  // diagonal values, dx_ per (t, x), dy_ per x
  std::vector<double> theta0_;
};

}  // namespace stlr
