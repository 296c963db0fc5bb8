#include "spamtree/model.hpp"

#include <cmath>

namespace spamtree {

std::vector<int> ModelData::observed_count() const {
  std::vector<int> c(q, 0);
  for (int i = 0; i < n(); ++i)
    if (observed[i]) c[locations.var(i)]++;
  return c;
}

Vector ModelData::linear_predictor(const Vector& beta) const {
  Vector m = Vector::Zero(n());
  const int np = p();
  if (np == 0) return m;
  if (beta.size() != num_coef()) throw Error("coefficient vector has the wrong length");
  for (int i = 0; i < n(); ++i) m(i) = X.row(i).dot(beta.segment(locations.var(i) * np, np));
  return m;
}

void ModelData::validate() const {
  if (y.size() != n() || static_cast<int>(observed.size()) != n() || X.rows() != n())
    throw Error("data components disagree on the number of rows");
  if (q < 1) throw Error("data must have at least one outcome");
  for (int i = 0; i < n(); ++i) {
    if (locations.var(i) >= q) throw Error("variable index out of range at row " + std::to_string(i));
    if (observed[i] && !std::isfinite(y(i))) throw Error("non-finite outcome at row " + std::to_string(i));
    for (int k = 0; k < p(); ++k)
      if (!std::isfinite(X(i, k))) throw Error("non-finite covariate at row " + std::to_string(i));
  }
}

}  // namespace spamtree
