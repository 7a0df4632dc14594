#include "stlr/wavelet_operator.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace stlr {

namespace {

// spectral norm by power iteration on M^T M
double spectral_norm(const Matrix& m, int iters = 200) {
  const std::size_t n = m.cols();
  if (n == 0 || m.rows() == 0) return 0.0;
  std::vector<double> x(n, 1.0);
  double nrm = norm2(x);
  for (double& v : x) v /= nrm;
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) y[i] = dot(m.row(i), x);
    std::vector<double> z(n, 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) z[j] += m(i, j) * y[i];
    const double zn = norm2(z);
    if (zn == 0.0) return 0.0;
    const double next = std::sqrt(zn);
    for (std::size_t j = 0; j < n; ++j) x[j] = z[j] / zn;
    if (it > 20 && std::abs(next - sigma) < 1e-12 * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

}  // namespace

WaveletOperator::WaveletOperator(std::shared_ptr<const MultiwaveletBasis> basis, Kind kind)
    : basis_(std::move(basis)), kind_(kind) {}

std::shared_ptr<const WaveletOperator> WaveletOperator::build(std::shared_ptr<const MultiwaveletBasis> basis,
                                                              Kind kind) {
  static std::map<std::tuple<const MultiwaveletBasis*, int>, std::shared_ptr<const WaveletOperator>> cache;
  static std::mutex mtx;
  const auto key = std::make_tuple(basis.get(), static_cast<int>(kind));
  {
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  std::shared_ptr<WaveletOperator> op(new WaveletOperator(std::move(basis), kind));
  op->assemble();
  op->measure();
  std::lock_guard<std::mutex> lock(mtx);
  auto [it, inserted] = cache.emplace(key, op);
  return it->second;
}

void WaveletOperator::assemble() {
  const int n = basis_->size();
  table_ = Matrix(n, n);
  dscale_.resize(n);
  for (int i = 0; i < n; ++i) {
    dscale_[i] = (kind_ == Kind::SpatialStiffness) ? 1.0 / std::sqrt(basis_->h1_seminorm_sq(i))
                                                   : 1.0 / std::sqrt(basis_->h1_norm_sq(i));
  }
  auto overlap = [&](int i, int j) {
    const auto& f = basis_->function(i);
    const auto& g = basis_->function(j);
    return f.support_left() < g.support_right() && g.support_left() < f.support_right();
  };
  if (kind_ == Kind::SpatialStiffness) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        if (!overlap(i, j)) continue;
        const double v = inner_product(basis_->derivative(i), basis_->derivative(j));
        table_(i, j) = v;
        table_(j, i) = v;
      }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (!overlap(i, j)) continue;
        const double a = inner_product(basis_->derivative(i), basis_->function(j));
        const double b = inner_product(basis_->function(i), basis_->derivative(j));
        const double bnd = basis_->value_at_end(i) * basis_->value_at_end(j) -
                           basis_->value_at_0(i) * basis_->value_at_0(j);
        table_(i, j) = 0.5 * (a - b) + 0.5 * bnd;
      }
  }
}

bool WaveletOperator::retained(int a, int b, int j) const {
  const int diff = std::abs(basis_->level_of(a) - basis_->level_of(b));
  if (kind_ == Kind::SpatialStiffness) return diff <= j;
  if (j == 0) return false;
  return diff <= j - 1;
}

void WaveletOperator::measure() {
  const int n = basis_->size();
  const int jmax = basis_->max_level() + 2;
  // the stiffness is rescaled from both sides, the derivative from the right
  auto scaled_entry = [&](int a, int b) {
    const double left = (kind_ == Kind::SpatialStiffness) ? dscale_[a] : 1.0;
    return left * table_(a, b) * dscale_[b];
  };
  bounds_.clear();
  for (int j = 0; j <= jmax; ++j) {
    Matrix diff(n, n);
    bool any = false;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (retained(a, b, j) || table_(a, b) == 0.0) continue;
        diff(a, b) = scaled_entry(a, b);
        any = true;
      }
    bounds_.push_back(any ? 1.05 * spectral_norm(diff) : 0.0);
  }
  {
    Matrix scaled(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) scaled(a, b) = scaled_entry(a, b);
    scaled_norm_ = 1.05 * spectral_norm(scaled);
  }
  // nonincreasing envelope; the measured values already decay but guard anyway
  for (std::size_t j = 1; j < bounds_.size(); ++j) bounds_[j] = std::min(bounds_[j], bounds_[j - 1]);

  c_super_ = 0;
  for (int a = 0; a < n; ++a) {
    std::map<int, int> row_count;
    for (int b = 0; b < n; ++b) {
      if (std::abs(scaled_entry(a, b)) <= 1e-10) continue;
      ++row_count[std::abs(basis_->level_of(a) - basis_->level_of(b))];
    }
    for (auto& [band, cnt] : row_count) c_super_ = std::max(c_super_, cnt);
  }
}

double WaveletOperator::bound(int j) const {
  if (j < 0) j = 0;
  if (j >= static_cast<int>(bounds_.size())) return 0.0;
  return bounds_[j];
}

}  // namespace stlr
