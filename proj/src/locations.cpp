#include "spamtree/common.hpp"

#include <algorithm>
#include <cmath>

namespace spamtree {

double euclidean(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

void LocationSet::push_back(std::span<const double> coords, int var) {
  if (static_cast<int>(coords.size()) != dim_) {
    throw Error("location has " + std::to_string(coords.size()) + " coordinates, expected " +
                std::to_string(dim_));
  }
  if (var < 0) throw Error("negative variable index");
  coords_.insert(coords_.end(), coords.begin(), coords.end());
  var_.push_back(var);
}

int LocationSet::num_vars() const {
  int q = 0;
  for (int v : var_) q = std::max(q, v + 1);
  return q;
}

ExpandedLocation LocationSet::at(int i) const {
  ExpandedLocation e;
  e.coords.assign(coords(i), coords(i) + dim_);
  e.var = var_[i];
  return e;
}

LocationSet LocationSet::subset(std::span<const int> idx) const {
  LocationSet out(dim_);
  for (int i : idx) out.push_back(std::span<const double>(coords(i), dim_), var_[i]);
  return out;
}

double LocationSet::dist(int i, int j) const { return euclidean(coords(i), coords(j), dim_); }

double LocationSet::dist(int i, const double* p) const { return euclidean(coords(i), p, dim_); }

}  // namespace spamtree
