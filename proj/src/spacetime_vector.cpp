#include "stlr/spacetime_vector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace stlr {

const HTensor* SpaceTimeVector::slice(int t) const {
  auto it = slices_.find(t);
  return it == slices_.end() ? nullptr : &it->second;
}

void SpaceTimeVector::set_slice(int t, HTensor h) {
  if (!h.valid() || h.is_structurally_zero()) {
    slices_.erase(t);
    return;
  }
  if (tree_ == nullptr) tree_ = h.tree_ptr();
  if (!tree_->same_structure(h.tree())) throw std::invalid_argument("set_slice: dimension tree mismatch");
  slices_[t] = std::move(h);
}

void SpaceTimeVector::prune() {
  for (auto it = slices_.begin(); it != slices_.end();) {
    if (it->second.is_structurally_zero() || it->second.norm() == 0.0)
      it = slices_.erase(it);
    else
      ++it;
  }
}

double SpaceTimeVector::norm() const {
  double s = 0.0;
  for (const auto& [t, h] : slices_) {
    const double n = h.norm();
    s += n * n;
  }
  return std::sqrt(s);
}

int SpaceTimeVector::rank_infty() const {
  int r = 0;
  for (const auto& [t, h] : slices_) r = std::max(r, h.max_rank());
  return r;
}

std::vector<int> SpaceTimeVector::temporal_support() const {
  std::vector<int> out;
  for (const auto& [t, h] : slices_) out.push_back(t);
  return out;
}

std::size_t SpaceTimeVector::support_sum() const {
  std::size_t s = 0;
  for (const auto& [t, h] : slices_)
    for (int m = 0; m < dims(); ++m) s += h.leaf_ids(m).size();
  return s;
}

SpaceTimeVector& SpaceTimeVector::scale(double s) {
  if (s == 0.0) {
    slices_.clear();
    return *this;
  }
  for (auto& [t, h] : slices_) h.scale(s);
  return *this;
}

SpaceTimeVector SpaceTimeVector::axpy(double a, const SpaceTimeVector& x, const SpaceTimeVector& y) {
  SpaceTimeVector out(y.tree_ ? y.tree_ : x.tree_);
  if (x.tree_ && y.tree_ && !x.tree_->same_structure(*y.tree_))
    throw std::invalid_argument("axpy: dimension tree mismatch");
  for (const auto& [t, h] : y.slices_) out.slices_[t] = h;
  if (a != 0.0) {
    for (const auto& [t, h] : x.slices_) {
      HTensor ax = h;
      ax.scale(a);
      auto it = out.slices_.find(t);
      if (it == out.slices_.end())
        out.slices_[t] = std::move(ax);
      else
        it->second = HTensor::add(it->second, ax);
    }
  }
  return out;
}

double SpaceTimeVector::inner(const SpaceTimeVector& a, const SpaceTimeVector& b) {
  double s = 0.0;
  for (const auto& [t, h] : a.slices_) {
    const HTensor* g = b.slice(t);
    if (g) s += HTensor::inner(h, *g);
  }
  return s;
}

double ContractionTable::mode_norm(int mode) const {
  double s = 0.0;
  for (const auto& [key, vals] : values) {
    if (key.first != mode) continue;
    for (double v : vals) s += v * v;
  }
  return std::sqrt(s);
}

ContractionTable contractions(SpaceTimeVector& v) {
  ContractionTable table;
  for (auto& [t, h] : v.slices()) {
    h.hsvd();
    for (int m = 0; m < v.dims(); ++m) {
      table.values[{m, t}] = h.contraction(m);
      table.ids[{m, t}] = h.leaf_ids(m);
    }
    table.slice_norms[t] = h.norm();
  }
  return table;
}

SpaceTimeVector recompress(const SpaceTimeVector& v, double eta, RecompressReport* report) {
  SpaceTimeVector out(v.tree_ptr());
  // collect spectra
  std::map<int, HTensor> work;
  for (const auto& [t, h] : v.slices()) {
    work[t] = h;
    work[t].hsvd();
  }
  const double eta2 = eta * eta;

  // minimal common cap R: the tail with every edge capped at R must fit
  int rmax = 0;
  for (auto& [t, h] : work) rmax = std::max(rmax, h.max_rank());
  auto tail_at_cap = [&](int cap) {
    double s = 0.0;
    for (auto& [t, h] : work)
      for (int e = 0; e < h.tree().edge_count(); ++e) {
        const auto& sig = h.edge_sigma(e);
        for (std::size_t k = cap; k < sig.size(); ++k) s += sig[k] * sig[k];
      }
    return s;
  };
  int lo = 0, hi = rmax;
  if (tail_at_cap(0) <= eta2) {
    hi = 0;
  } else {
    while (lo + 1 < hi) {
      const int mid = (lo + hi) / 2;
      if (tail_at_cap(mid) <= eta2)
        hi = mid;
      else
        lo = mid;
    }
  }
  const int cap = hi;
  double used = tail_at_cap(cap);

  // greedy post-pass: drop the globally smallest retained singular values
  // while the budget allows, never increasing the common cap
  struct Item {
    double mass;
    int slice;
    int edge;
    int k;  // 0-based position
  };
  std::vector<Item> items;
  for (auto& [t, h] : work)
    for (int e = 0; e < h.tree().edge_count(); ++e) {
      const auto& sig = h.edge_sigma(e);
      for (int k = 0; k < std::min<int>(cap, static_cast<int>(sig.size())); ++k)
        items.push_back({sig[k] * sig[k], t, e, k});
    }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.mass != b.mass) return a.mass < b.mass;
    return std::tie(a.slice, a.edge, b.k) < std::tie(b.slice, b.edge, a.k);
  });
  std::map<std::pair<int, int>, int> keep;  // (slice, edge) -> rank
  for (auto& [t, h] : work)
    for (int e = 0; e < h.tree().edge_count(); ++e)
      keep[{t, e}] = std::min<int>(cap, static_cast<int>(h.edge_sigma(e).size()));
  for (const Item& it : items) {
    auto& r = keep[{it.slice, it.edge}];
    if (it.k != r - 1) continue;  // only the current tail element is droppable
    if (used + it.mass > eta2) continue;
    used += it.mass;
    --r;
  }

  int rank_inf = 0;
  for (auto& [t, h] : work) {
    std::vector<int> ranks(h.tree().edge_count());
    for (int e = 0; e < h.tree().edge_count(); ++e) {
      ranks[e] = keep[{t, e}];
      rank_inf = std::max(rank_inf, ranks[e]);
    }
    h.truncate(ranks);
    out.set_slice(t, std::move(h));
  }
  if (report) {
    report->rank_infty = rank_inf;
    report->tail = std::sqrt(used);
  }
  return out;
}

namespace {

struct ContractionItem {
  double value;
  int mode;
  int slice;
  int id;
};

std::vector<ContractionItem> sorted_contractions(const SpaceTimeVector& v) {
  SpaceTimeVector work = v;
  std::vector<ContractionItem> items;
  for (auto& [t, h] : work.slices()) {
    h.hsvd();
    for (int m = 0; m < v.dims(); ++m) {
      auto pi = h.contraction(m);
      for (std::size_t i = 0; i < pi.size(); ++i)
        items.push_back({pi[i], m, t, h.leaf_ids(m)[i]});
    }
  }
  std::sort(items.begin(), items.end(), [](const ContractionItem& a, const ContractionItem& b) {
    if (a.value != b.value) return a.value > b.value;
    return std::tie(a.mode, a.slice, a.id) < std::tie(b.mode, b.slice, b.id);
  });
  return items;
}

}  // namespace

std::vector<double> coarsening_error_sequence(const SpaceTimeVector& v) {
  auto items = sorted_contractions(v);
  std::vector<double> mu(items.size() + 1, 0.0);
  double acc = 0.0;
  for (std::size_t n = items.size(); n-- > 0;) {
    acc += items[n].value * items[n].value;
    mu[n] = std::sqrt(acc);
  }
  return mu;
}

SpaceTimeVector coarsen(const SpaceTimeVector& v, double eta, CoarsenReport* report) {
  auto items = sorted_contractions(v);
  double total2 = 0.0;
  for (const auto& it : items) total2 += it.value * it.value;

  // N(v, eta) = min{N : mu_N <= eta}
  std::size_t n = 0;
  double rem2 = total2;
  while (n < items.size() && rem2 > eta * eta) {
    rem2 -= items[n].value * items[n].value;
    ++n;
  }
  // guard roundoff: recompute the true remainder
  double mu2 = 0.0;
  for (std::size_t k = n; k < items.size(); ++k) mu2 += items[k].value * items[k].value;

  std::map<std::pair<int, int>, std::vector<int>> retained;  // (slice, mode) -> ids
  for (std::size_t k = 0; k < n; ++k) retained[{items[k].slice, items[k].mode}].push_back(items[k].id);

  SpaceTimeVector out(v.tree_ptr());
  for (const auto& [t, h] : v.slices()) {
    std::vector<std::vector<int>> keep(v.dims());
    bool nonempty = true;
    for (int m = 0; m < v.dims(); ++m) {
      auto it = retained.find({t, m});
      if (it == retained.end()) {
        nonempty = false;
        break;
      }
      keep[m] = it->second;
      std::sort(keep[m].begin(), keep[m].end());
    }
    if (!nonempty) continue;
    HTensor r = h;
    r.restrict_modes(keep);
    out.set_slice(t, std::move(r));
  }
  if (report) {
    report->retained = n;
    report->mu = std::sqrt(mu2);
  }
  return out;
}

}  // namespace stlr
