#include "spamtree/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace spamtree {

namespace {
constexpr int kBucket = 8;
}

void KdTree::add(const double* coords, const Key& key, int payload) {
  pts_.insert(pts_.end(), coords, coords + dim_);
  keys_.push_back(key);
  payload_.push_back(payload);
  root_ = -1;
}

double KdTree::dist2(int i, const double* q) const {
  const double* p = pts_.data() + static_cast<std::size_t>(i) * dim_;
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) {
    const double t = p[k] - q[k];
    s += t * t;
  }
  return s;
}

void KdTree::build() {
  order_.resize(keys_.size());
  std::iota(order_.begin(), order_.end(), 0);
  cells_.clear();
  root_ = keys_.empty() ? -1 : build_range(0, static_cast<int>(order_.size()));
}

int KdTree::build_range(int lo, int hi) {
  const int id = static_cast<int>(cells_.size());
  cells_.push_back(Cell{lo, hi});
  if (hi - lo <= kBucket) return id;

  int axis = 0;
  double best_spread = -1.0;
  for (int k = 0; k < dim_; ++k) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (int i = lo; i < hi; ++i) {
      const double v = pts_[static_cast<std::size_t>(order_[i]) * dim_ + k];
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (mx - mn > best_spread) {
      best_spread = mx - mn;
      axis = k;
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide

  const int mid = (lo + hi) / 2;
  auto coord = [&](int i) { return pts_[static_cast<std::size_t>(i) * dim_ + axis]; };
  std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                   [&](int a, int b) { return coord(a) < coord(b); });
  const double split = coord(order_[mid]);
  const int left = build_range(lo, mid);
  const int right = build_range(mid, hi);
  cells_[id].axis = axis;
  cells_[id].split = split;
  cells_[id].left = left;
  cells_[id].right = right;
  return id;
}

void KdTree::search(int c, const double* q, Hit& best) const {
  const Cell& cell = cells_[c];
  if (cell.axis < 0) {
    for (int i = cell.lo; i < cell.hi; ++i) {
      const int p = order_[i];
      const double d2 = dist2(p, q);
      if (best.payload < 0 || d2 < best.dist2 || (d2 == best.dist2 && keys_[p] < best.key)) {
        best.payload = payload_[p];
        best.dist2 = d2;
        best.key = keys_[p];
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[cell.axis] - cell.split;
  const int near = diff < 0.0 ? cell.left : cell.right;
  const int far = diff < 0.0 ? cell.right : cell.left;
  search(near, q, best);
  if (best.payload < 0 || diff * diff <= best.dist2) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const double* q) const {
  Hit best;
  if (root_ < 0) return best;
  search(root_, q, best);
  return best;
}

}  // namespace spamtree
