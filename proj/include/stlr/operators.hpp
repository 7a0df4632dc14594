#pragma once

#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <vector>

#include "stlr/scaling_tables.hpp"
#include "stlr/spacetime_vector.hpp"
#include "stlr/wavelet_operator.hpp"

namespace stlr {

/// Right-hand side data: source coefficients against the unscaled space-time
/// test functions and initial data against the spatial basis.
struct RhsData {
  SpaceTimeVector g1;
  HTensor g2;
};

/// Shell partition of the active (mode, slice, index) entries of a vector,
/// built from one global descending sort of all contraction values. The
/// cumulative set at level j holds the 2^j globally largest entries; shell p
/// is the difference of consecutive cumulative sets.
class ShellPartition {
 public:
  /// p in 0..J, or J+1 when the entry is outside the level-J cumulative set.
  int shell_of(int mode, int slice, int id, int j_max) const;

  /// Ids of the cumulative set at level j for one (mode, slice) pair.
  std::vector<int> cumulative_ids(int mode, int slice, int j) const;

  std::size_t total_items() const { return count_; }

  /// l2 masses of a contraction table against the shells: entry p of the
  /// result is the norm of the table values inside shell p, p = 0..J+1.
  std::vector<double> shell_masses(const ContractionTable& w, int mode, int j_max) const;

  std::map<std::tuple<int, int, int>, int> position;                      // (mode, slice, id) -> rank
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> lists;  // (mode, slice) -> (pos, id)
  std::size_t count_ = 0;
};

struct ApplyReport {
  int j = 0;
  double error_bound = 0.0;   // certified total bound for the call
  double e_functional = 0.0;  // computable a posteriori value at the chosen J
  std::map<int, int> n_x;     // per input slice
  std::map<int, int> n_y;     // per output slice
};

/// Measured constants and the adaptive application of the rescaled operators.
/// All outputs live on the constructible section of the bases; the measured
/// compression bounds are exact operator norms for that section.
class OperatorContext {
 public:
  OperatorContext(std::shared_ptr<const MultiwaveletBasis> temporal,
                  std::shared_ptr<const MultiwaveletBasis> spatial, int d, double delta);

  const ScalingTables& tables() const { return *tables_; }
  const std::shared_ptr<const DimensionTree>& tree() const { return tree_; }
  const MultiwaveletBasis& temporal_basis() const { return *tb_; }
  const MultiwaveletBasis& spatial_basis() const { return *sp_; }
  const WaveletOperator& t2() const { return *t2_; }
  const WaveletOperator& tt() const { return *tt_; }
  int dims() const { return d_; }
  double delta() const { return delta_; }

  double norm_b1() const { return norm_b1_; }
  double norm_b2() const { return norm_b2_; }
  double norm_b() const { return std::sqrt(norm_b1_ * norm_b1_ + norm_b2_ * norm_b2_); }
  double bound_t0(int j) const;  // ||(T0 - T0_j) D_X|| on the section
  int t0_band_max() const { return static_cast<int>(beta0_.size()); }

  ShellPartition partition(const SpaceTimeVector& v) const;
  ShellPartition partition_spatial(const HTensor& w) const;

  // computable a posteriori error functionals (shells from v, masses from w)
  double error_x(const ShellPartition& pv, const ContractionTable& cw, int j) const;
  double error_t(const ShellPartition& pv, const ContractionTable& cw, int j) const;
  double error_total(const ShellPartition& pv, const ContractionTable& cw, int j) const {
    return error_x(pv, cw, j) + error_t(pv, cw, j);
  }
  double error_t0(const ShellPartition& pv, const ContractionTable& cw, int j) const;

  // fixed-J building blocks (unscaled operator parts)
  SpaceTimeVector apply_tx_j(const SpaceTimeVector& u, const ShellPartition& pv, int j) const;
  SpaceTimeVector apply_tt_j(const SpaceTimeVector& u, const ShellPartition& pv, int j, bool transpose,
                             double round_tol = 0.0) const;
  HTensor apply_t0_j(const SpaceTimeVector& u, const ShellPartition& pv, int j, double round_tol = 0.0) const;
  SpaceTimeVector apply_t0_adjoint_j(const HTensor& u, const ShellPartition& pw, int j,
                                     double round_tol = 0.0) const;

  /// Contraction table of (a copy of) the argument, spatial variant keyed by
  /// the -1 pseudo-slice; exposed for error-functional evaluation in tests.
  ContractionTable contraction_table(const SpaceTimeVector& v) const;
  ContractionTable contraction_table_spatial(const HTensor& w) const;

  // fixed-J applications with converged scalings, for verification
  SpaceTimeVector apply_bx_j(const SpaceTimeVector& v, int j, double* e_out = nullptr) const;
  SpaceTimeVector apply_bt_j(const SpaceTimeVector& v, int j, double* e_out = nullptr) const;

  // tolerance-driven applications
  SpaceTimeVector apply_b1(const SpaceTimeVector& v, double eta, ApplyReport* report = nullptr) const;
  SpaceTimeVector apply_b1_transpose(const SpaceTimeVector& v, double eta, ApplyReport* report = nullptr) const;
  HTensor apply_b2(const SpaceTimeVector& v, double eta, ApplyReport* report = nullptr) const;
  SpaceTimeVector apply_b2_transpose(const HTensor& w, double eta, ApplyReport* report = nullptr) const;
  SpaceTimeVector apply_normal(const SpaceTimeVector& v, double eta) const;
  SpaceTimeVector rhs(const RhsData& data, double eta) const;

  /// J(eta; v): smallest j with e_j(v) <= eta/4 (throws if none below the cap).
  int select_j(const ShellPartition& pv, const ContractionTable& cv, double eta, bool with_t0,
               bool t0_only = false) const;

 private:
  void calibrate_t0();
  void calibrate_norms();

  // scaling term counts for a tolerance zeta and per-slice argument caps
  std::map<int, int> counts_x(const std::map<int, double>& k_per_slice, double zeta) const;
  std::map<int, int> counts_y(const std::map<int, double>& k_per_slice, double zeta) const;

  std::shared_ptr<const MultiwaveletBasis> tb_, sp_;
  std::shared_ptr<const WaveletOperator> t2_, tt_;
  std::shared_ptr<const ScalingTables> tables_;
  std::shared_ptr<const DimensionTree> tree_;
  int d_;
  double delta_;
  double c_delta_;
  std::vector<double> beta0_;
  double norm_b1_ = 0.0, norm_b2_ = 0.0;
};

/// y = sum_i (op_i at leaf i) x realized with doubled representation ranks
/// (identity path and one operator application per elementary term).
struct LeafOp {
  std::vector<int> out_ids;
  std::function<double(int, int)> entry;
};
HTensor apply_one_per_leaf(const HTensor& x, const std::vector<LeafOp>& ops);

}  // namespace stlr
