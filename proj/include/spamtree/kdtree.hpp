#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace spamtree {

/// Static kd-tree for exact nearest-point queries. Equidistant points are
/// resolved by the smallest key, so answers match a brute-force scan.
class KdTree {
 public:
  using Key = std::array<std::int64_t, 3>;

  KdTree() = default;
  explicit KdTree(int dim) : dim_(dim) {}

  void add(const double* coords, const Key& key, int payload);
  void build();

  bool empty() const { return keys_.empty(); }
  int size() const { return static_cast<int>(keys_.size()); }

  struct Hit {
    int payload = -1;
    double dist2 = 0.0;
    Key key{};
  };
  Hit nearest(const double* q) const;

 private:
  struct Cell {
    int lo, hi;  // range into order_
    int axis = -1;
    double split = 0.0;
    int left = -1, right = -1;
  };
  int build_range(int lo, int hi);
  void search(int cell, const double* q, Hit& best) const;
  double dist2(int i, const double* q) const;

  int dim_ = 2;
  std::vector<double> pts_;
  std::vector<Key> keys_;
  std::vector<int> payload_;
  std::vector<int> order_;
  std::vector<Cell> cells_;
  int root_ = -1;
};

}  // namespace spamtree
