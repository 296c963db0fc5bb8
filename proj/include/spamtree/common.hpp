#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spamtree {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point of the expanded domain: spatial coordinates plus the outcome margin.
struct ExpandedLocation {
  std::vector<double> coords;
  int var = 0;
};

/// Flat storage of expanded locations; the ordinal of a location is its row.
class LocationSet {
 public:
  LocationSet() = default;
  explicit LocationSet(int dim) : dim_(dim) {}

  void push_back(std::span<const double> coords, int var);
  void push_back(const ExpandedLocation& loc) { push_back(loc.coords, loc.var); }

  int size() const { return static_cast<int>(var_.size()); }
  int dim() const { return dim_; }
  bool empty() const { return var_.empty(); }
  const double* coords(int i) const { return coords_.data() + static_cast<std::size_t>(i) * dim_; }
  int var(int i) const { return var_[i]; }
  int num_vars() const;
  ExpandedLocation at(int i) const;
  LocationSet subset(std::span<const int> idx) const;

  double dist(int i, int j) const;
  double dist(int i, const double* p) const;

 private:
  int dim_ = 2;
  std::vector<double> coords_;
  std::vector<int> var_;
};

double euclidean(const double* a, const double* b, int dim);

}  // namespace spamtree
